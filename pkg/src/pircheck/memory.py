"""The memory function: (task path, name) -> sparse index map.

Resolution picks the innermost (longest-prefix) declaring task.  The
store never shrinks; finished tasks only get their keys flagged as
local-dead.
"""
from __future__ import annotations

from .lang import ast as A
from .symval import Err, SymNode, to_prefix

ROOT = (0,)


def is_prefix(p: tuple, q: tuple) -> bool:
    return len(p) <= len(q) and q[:len(p)] == p


class VarArray:
    """Storage of one declared (task, name) key, plus its access index."""

    __slots__ = ("key", "kind", "cells", "dead", "acc", "captured")

    def __init__(self, key, kind):
        self.key = key
        self.kind = kind
        self.cells = {}
        self.dead = False
        self.acc = None  # set by the interpreter: per-cell access table
        self.captured = False  # spawn-time private copy of a parent variable

    @property
    def task(self):
        return self.key[0]

    @property
    def name(self):
        return self.key[1]


class UndeclaredVariable(KeyError):
    pass


class Memory:
    def __init__(self):
        self.store: dict[tuple, VarArray] = {}
        self.decl_order: list[tuple] = []
        self.by_name: dict[str, dict[tuple, VarArray]] = {}
        self.epoch: dict[str, int] = {}
        self.by_task: dict[tuple, list[VarArray]] = {}

    # -- the four helpers
    def mem_decl(self, task: tuple, name: str, kind: str = A.INT) -> VarArray:
        key = (task, name)
        arr = self.store.get(key)
        if arr is None:
            arr = VarArray(key, kind)
            self.store[key] = arr
            self.decl_order.append(key)
            self.by_name.setdefault(name, {})[task] = arr
            self.by_task.setdefault(task, []).append(arr)
            self.epoch[name] = self.epoch.get(name, 0) + 1
        return arr

    def lookup(self, task: tuple, name: str) -> VarArray | None:
        scopes = self.by_name.get(name)
        if not scopes:
            return None
        for k in range(len(task), 0, -1):
            arr = scopes.get(task[:k])
            if arr is not None:
                return arr
        return None

    def get_var(self, task: tuple, name: str):
        arr = self.lookup(task, name)
        return None if arr is None else arr.key[0]

    def var_eval(self, task: tuple, name: str, idx):
        arr = self.lookup(task, name)
        if arr is None:
            return None
        return arr.cells.get(_idx(idx))

    def mem_update(self, task: tuple, name: str, idx, value) -> "Memory":
        if type(value) is Err:
            raise ValueError("cannot store Err")
        arr = self.lookup(task, name)
        if arr is None:
            raise UndeclaredVariable(name)
        arr.cells[_idx(idx)] = value
        return self

    # -- lifecycle and inspection
    def finish_task(self, task: tuple):
        for arr in self.by_task.get(task, ()):
            arr.dead = True

    def root_names(self) -> set:
        return {name for (t, name) in self.store if t == ROOT}

    def root_array(self, name: str) -> VarArray | None:
        return self.store.get((ROOT, name))

    def items(self, captured=False):
        """(task, name, idx, value) sorted by task path, name, index.

        Spawn-time copies are skipped unless ``captured`` is set.
        """
        for key in sorted(self.store, key=_sort_key):
            arr = self.store[key]
            if arr.captured and not captured:
                continue
            for idx in sorted(arr.cells, key=_idx_key):
                yield key[0], key[1], idx, arr.cells[idx]

    def serialize(self, max_len=None, sym=None) -> str:
        """Deterministic text form: one ``task name[idx] = value`` per line."""
        fmt = sym or (lambda v: to_prefix(v, max_len=max_len))
        lines = []
        for task, name, idx, val in self.items():
            dead = "  # local-dead" if self.store[(task, name)].dead else ""
            lines.append(f"{'.'.join(map(str, task))} {name}{''.join(f'[{i}]' for i in idx)} = {fmt(val)}{dead}")
        return "\n".join(lines) + ("\n" if lines else "")

    def __len__(self):
        return len(self.store)


def _idx(idx):
    return idx if type(idx) is tuple else (idx,)


def _sort_key(key):
    return (key[0], key[1])


def _idx_key(idx):
    return idx


def is_symbolic(v) -> bool:
    return type(v) is SymNode
