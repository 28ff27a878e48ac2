"""Symbol roles for a mechanical system: coordinates, velocities, momenta."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

COORDINATE = "coordinate"
VELOCITY = "velocity"
MOMENTUM = "momentum"
TIME = "time"
TIME_MOMENTUM = "time_momentum"
CONSTANT = "constant"
FUNCTION = "function"

TIME_NAME = "t"
TIME_MOMENTUM_NAME = "p0"


def velocity_name(coord: str) -> str:
    return f"{coord}_dot"


def default_momentum_name(coord: str) -> str:
    """``q3 -> p3``; any other coordinate ``x -> p_x``."""
    m = re.fullmatch(r"q(\d+)", coord)
    if m:
        return f"p{m.group(1)}"
    return f"p_{coord}"


@dataclass(frozen=True)
class SymbolInfo:
    name: str
    role: str
    index: Optional[int] = None  # links coordinate/velocity/momentum triples


class SymbolTable:
    """Ordered, frozen-after-build registry of symbol names and roles."""

    def __init__(self):
        self._symbols: Dict[str, SymbolInfo] = {}
        self._by_role: Dict[Tuple[str, Optional[int]], str] = {}
        self._coords: List[str] = []
        self._frozen = False
        self.arity: Dict[str, int] = {}

    def _add(self, name: str, role: str, index: Optional[int] = None):
        if self._frozen:
            raise RuntimeError("symbol table is frozen")
        if name in self._symbols:
            raise ValueError(f"duplicate symbol {name}")
        key = (role, index)
        if role not in (CONSTANT, FUNCTION) and key in self._by_role:
            raise ValueError(f"duplicate role {role} for index {index}")
        self._symbols[name] = SymbolInfo(name, role, index)
        if role not in (CONSTANT, FUNCTION):
            self._by_role[key] = name

    @classmethod
    def build(cls, coordinates, constants=(), functions=None, momenta=None, with_velocities=True):
        """Create a table for ``coordinates`` with time, momenta and velocities."""
        t = cls()
        t._add(TIME_NAME, TIME)
        t._add(TIME_MOMENTUM_NAME, TIME_MOMENTUM)
        momenta = list(momenta) if momenta is not None else [default_momentum_name(c) for c in coordinates]
        for i, (c, p) in enumerate(zip(coordinates, momenta)):
            t._add(c, COORDINATE, i)
            t._coords.append(c)
            if with_velocities:
                t._add(velocity_name(c), VELOCITY, i)
            t._add(p, MOMENTUM, i)
        for c in constants:
            t._add(c, CONSTANT)
        for f, n in (functions or {}).items():
            t._add(f, FUNCTION)
            t.arity[f] = n
        t._frozen = True
        return t

    def __contains__(self, name) -> bool:
        return name in self._symbols

    def __iter__(self) -> Iterator[str]:
        return iter(self._symbols)

    def __len__(self):
        return len(self._symbols)

    def info(self, name: str) -> SymbolInfo:
        return self._symbols[name]

    def role(self, name: str) -> str:
        return self._symbols[name].role

    @property
    def coordinates(self) -> List[str]:
        return list(self._coords)

    def velocity(self, coord: str) -> str:
        return self._by_role[(VELOCITY, self.info(coord).index)]

    def momentum(self, coord: str) -> str:
        return self._by_role[(MOMENTUM, self.info(coord).index)]

    def coordinate_of(self, name: str) -> str:
        return self._by_role[(COORDINATE, self.info(name).index)]

    @property
    def velocities(self) -> List[str]:
        return [self.velocity(c) for c in self._coords if (VELOCITY, self.info(c).index) in self._by_role]

    @property
    def momenta(self) -> List[str]:
        return [self.momentum(c) for c in self._coords]

    @property
    def constants(self) -> List[str]:
        return [n for n, s in self._symbols.items() if s.role == CONSTANT]

    @property
    def functions(self) -> List[str]:
        return [n for n, s in self._symbols.items() if s.role == FUNCTION]

    def is_velocity(self, name: str) -> bool:
        return name in self._symbols and self._symbols[name].role == VELOCITY

    def canonical_pairs(self) -> List[Tuple[str, str]]:
        """``(t, p0)`` followed by every ``(q_i, p_i)``."""
        return [(TIME_NAME, TIME_MOMENTUM_NAME)] + [(c, self.momentum(c)) for c in self._coords]
