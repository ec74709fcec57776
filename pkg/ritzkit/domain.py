# ritzkit/domain.py
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .errors import DimensionMismatchError


SCALING_PLAIN = "plain"
SCALING_NTK = "ntk"
SCALINGS = (SCALING_PLAIN, SCALING_NTK)

TRAINABLE_OUTER = "outer_only"
TRAINABLE_FULL = "full"
TRAINABLES = (TRAINABLE_OUTER, TRAINABLE_FULL)


# -----------------------------
# Float encoding (bit-exact JSON)
# -----------------------------

def float_to_hex(v: float) -> str:
    return float(v).hex()


def float_from_json(v) -> float:
    """Accepts hex-float strings ("0x1.8p+0") as well as plain numbers."""
    if isinstance(v, str):
        s = v.strip()
        if "x" in s.lower():
            return float.fromhex(s)
        return float(s)
    return float(v)


# -----------------------------
# Multi-index
# -----------------------------

@dataclass(frozen=True)
class MultiIndex:
    """
    Mixed partial derivative selector xi = (xi_1, ..., xi_d).

    order is |xi| = sum(xi_i). Hashable, so it can key feature caches.
    """
    entries: Tuple[int, ...]

    def __post_init__(self):
        ents = tuple(int(e) for e in self.entries)
        if not ents:
            raise ValueError("MultiIndex needs at least one entry")
        if any(e < 0 for e in ents):
            raise ValueError(f"MultiIndex entries must be >= 0, got {ents}")
        object.__setattr__(self, "entries", ents)

    @property
    def order(self) -> int:
        return int(sum(self.entries))

    @property
    def dim(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i: int) -> int:
        return self.entries[i]

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a + b for a, b in zip(self.entries, other.entries)))

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a - b for a, b in zip(self.entries, other.entries)))

    def dominates(self, other: "MultiIndex") -> bool:
        """other <= self componentwise."""
        return all(b <= a for a, b in zip(self.entries, other.entries))

    def sub_indices(self) -> List["MultiIndex"]:
        """All beta with beta <= self componentwise (Leibniz support)."""
        return [MultiIndex(combo) for combo in itertools.product(*(range(e + 1) for e in self.entries))]

    def binomial(self, beta: "MultiIndex") -> int:
        c = 1
        for a, b in zip(self.entries, beta.entries):
            c *= math.comb(a, b)
        return c

    @staticmethod
    def zero(d: int) -> "MultiIndex":
        return MultiIndex(tuple([0] * int(d)))

    @staticmethod
    def unit(d: int, i: int, k: int = 1) -> "MultiIndex":
        e = [0] * int(d)
        e[i] = int(k)
        return MultiIndex(tuple(e))

    @staticmethod
    def of(xi) -> "MultiIndex":
        if isinstance(xi, MultiIndex):
            return xi
        return MultiIndex(tuple(int(v) for v in xi))

    def to_list(self) -> List[int]:
        return list(self.entries)


def all_indices_up_to(d: int, order: int) -> List[MultiIndex]:
    """Every multi-index of dimension d with |xi| <= order, sorted by order."""
    out = [MultiIndex(tuple(c)) for c in itertools.product(range(order + 1), repeat=d) if sum(c) <= order]
    out.sort(key=lambda mi: (mi.order, tuple(-e for e in mi.entries)))
    return out


# -----------------------------
# Network parameters
# -----------------------------

@dataclass(frozen=True, eq=False)
class NetworkParams:
    """
    Two-layer tanh network u(x) = s * sum_k a_k tanh(w_k . x + b_k).

    s = 1 for scaling="plain" and 1/sqrt(m) for scaling="ntk".
    trainable decides which entries form the trainable vector:
      - outer_only: a                          (random feature model)
      - full:       a, w (row-major), b        (NTK regime)
    Arrays are copied to float64 and frozen on construction.
    """
    a: np.ndarray
    w: np.ndarray
    b: np.ndarray
    scaling: str = SCALING_PLAIN
    trainable: str = TRAINABLE_OUTER

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64).reshape(-1)
        w = np.array(self.w, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        if w.ndim == 1:
            w = w.reshape(-1, 1)
        if w.ndim != 2:
            raise ValueError("w must be an m x d matrix")
        m, d = w.shape
        if m < 1 or d < 1:
            raise ValueError("NetworkParams requires m >= 1 and d >= 1")
        if a.shape[0] != m or b.shape[0] != m:
            raise ValueError(f"a and b must have length m={m} (got {a.shape[0]}, {b.shape[0]})")
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown scaling '{self.scaling}'")
        if self.trainable not in TRAINABLES:
            raise ValueError(f"unknown trainable set '{self.trainable}'")
        for arr in (a, w, b):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    # ---------------- shape ----------------

    @property
    def m(self) -> int:
        return int(self.w.shape[0])

    @property
    def d(self) -> int:
        return int(self.w.shape[1])

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.m) if self.scaling == SCALING_NTK else 1.0

    @property
    def n_trainable(self) -> int:
        if self.trainable == TRAINABLE_FULL:
            return self.m * (self.d + 2)
        return self.m

    def check_points(self, x) -> Tuple[np.ndarray, bool]:
        """Returns (X as (n, d), was_single_point)."""
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        X = arr.reshape(1, -1) if single else arr
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DimensionMismatchError(f"points must have dimension d={self.d}, got shape {arr.shape}")
        return X, single

    # ---------------- trainable vector ----------------

    def trainable_vector(self) -> np.ndarray:
        if self.trainable == TRAINABLE_FULL:
            return np.concatenate([self.a, self.w.reshape(-1), self.b])
        return self.a.copy()

    def with_trainable_vector(self, theta) -> "NetworkParams":
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.shape[0] != self.n_trainable:
            raise DimensionMismatchError(
                f"trainable vector has length {theta.shape[0]}, expected {self.n_trainable}"
            )
        m, d = self.m, self.d
        if self.trainable == TRAINABLE_FULL:
            a = theta[:m]
            w = theta[m:m + m * d].reshape(m, d)
            b = theta[m + m * d:]
            return NetworkParams(a=a, w=w, b=b, scaling=self.scaling, trainable=self.trainable)
        return NetworkParams(a=theta, w=self.w, b=self.b, scaling=self.scaling, trainable=self.trainable)

    def with_outer(self, a) -> "NetworkParams":
        return NetworkParams(a=a, w=self.w, b=self.b, scaling=self.scaling, trainable=self.trainable)

    def replace(self, **kwargs) -> "NetworkParams":
        fields = dict(a=self.a, w=self.w, b=self.b, scaling=self.scaling, trainable=self.trainable)
        fields.update(kwargs)
        return NetworkParams(**fields)

    # ---------------- JSON ----------------

    def to_dict(self) -> Dict:
        return {
            "m": self.m,
            "d": self.d,
            "scaling": self.scaling,
            "trainable": self.trainable,
            "a": [float_to_hex(v) for v in self.a],
            "w": [[float_to_hex(v) for v in row] for row in self.w],
            "b": [float_to_hex(v) for v in self.b],
        }

    @staticmethod
    def from_dict(d: Dict) -> "NetworkParams":
        a = [float_from_json(v) for v in d["a"]]
        w = [[float_from_json(v) for v in row] for row in d["w"]]
        b = [float_from_json(v) for v in d["b"]]
        params = NetworkParams(
            a=a,
            w=w,
            b=b,
            scaling=str(d.get("scaling", SCALING_PLAIN)),
            trainable=str(d.get("trainable", TRAINABLE_OUTER)),
        )
        if "m" in d and int(d["m"]) != params.m:
            raise ValueError(f"params JSON declares m={d['m']} but carries {params.m} neurons")
        if "d" in d and int(d["d"]) != params.d:
            raise ValueError(f"params JSON declares d={d['d']} but w has width {params.d}")
        return params
