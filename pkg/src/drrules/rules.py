"""Conjunctions, DNF rule sets, convex ensembles, their complexities and losses."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

WEIGHT_TOL = 1e-9


class RuleError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Conjunction:
    """AND of literals ``x[j] == v``; literals are kept sorted by feature index."""

    literals: Tuple[Tuple[int, int], ...]

    def __init__(self, literals: Iterable[Tuple[int, int]]):
        lits = tuple(sorted((int(j), int(v)) for j, v in literals))
        if not lits:
            raise RuleError("a conjunction needs at least one literal")
        feats = [j for j, _ in lits]
        if len(set(feats)) != len(feats):
            raise RuleError("feature index repeated within a conjunction")
        if any(j < 0 for j in feats) or any(v not in (0, 1) for _, v in lits):
            raise RuleError("literals must be (index >= 0, value in {0,1})")
        object.__setattr__(self, "literals", lits)

    @classmethod
    def positive(cls, features: Iterable[int]) -> "Conjunction":
        return cls((j, 1) for j in features)

    @property
    def size(self) -> int:
        return len(self.literals)

    @property
    def complexity(self) -> int:
        return self.size + 1

    @property
    def max_index(self) -> int:
        return self.literals[-1][0] if self.literals else -1

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Vector of 0/1 outputs over the rows of ``X`` (or a single row)."""
        X = np.asarray(X)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        if self.max_index >= X2.shape[1]:
            raise RuleError(f"literal index {self.max_index} out of range for d={X2.shape[1]}")
        out = np.ones(X2.shape[0], dtype=bool)
        for j, v in self.literals:
            out &= X2[:, j] == v
        out = out.astype(np.uint8)
        return out[0] if single else out

    def format(self, names: Optional[Sequence[str]] = None) -> str:
        parts = []
        for j, v in self.literals:
            if names is None:
                parts.append(f"f{j}={v}")
            else:
                parts.append(names[j] if v == 1 else f"NOT {names[j]}")
        return "(" + " AND ".join(parts) + ")"


@dataclass(frozen=True)
class RuleSet:
    """OR of conjunctions, canonically ordered; the empty rule set predicts 0."""

    rules: Tuple[Conjunction, ...]

    def __init__(self, rules: Iterable[Conjunction] = ()):
        rs = tuple(sorted(rules, key=lambda t: (t.size, t.literals)))
        if len(set(rs)) != len(rs):
            raise RuleError("duplicate conjunction in rule set")
        object.__setattr__(self, "rules", rs)

    @property
    def M(self) -> int:
        return len(self.rules)

    @property
    def complexity(self) -> int:
        return sum(t.complexity for t in self.rules)

    def __len__(self):
        return len(self.rules)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        out = np.zeros(X2.shape[0], dtype=np.uint8)
        for t in self.rules:
            out |= t.evaluate(X2)
        return out[0] if single else out

    def format(self, names=None) -> str:
        if not self.rules:
            return "FALSE"
        return " OR ".join(t.format(names) for t in self.rules)

    def to_list(self) -> list:
        return [[list(l) for l in t.literals] for t in self.rules]

    @staticmethod
    def from_list(data) -> "RuleSet":
        return RuleSet(Conjunction(tuple(l) for l in t) for t in data)


@dataclass(frozen=True)
class Ensemble:
    """Convex combination ``F = sum_k v_k h_k``; predicts 1 iff ``F >= 1/2``."""

    members: Tuple[Tuple[RuleSet, float], ...]

    def __init__(self, members: Iterable[Tuple[RuleSet, float]], normalize: bool = False):
        ms = [(h, float(v)) for h, v in members if float(v) > WEIGHT_TOL]
        if any(v < 0 for _, v in ms):
            raise RuleError("negative ensemble weight")
        total = sum(v for _, v in ms)
        if ms and normalize:
            ms = [(h, v / total) for h, v in ms]
        elif ms and abs(total - 1.0) > 1e-9:
            raise RuleError(f"ensemble weights sum to {total}, expected 1")
        object.__setattr__(self, "members", tuple(ms))

    @property
    def weights(self) -> np.ndarray:
        return np.array([v for _, v in self.members])

    @property
    def complexity(self) -> int:
        return sum(h.complexity for h, _ in self.members)

    def __len__(self):
        return len(self.members)

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        F = np.zeros(X2.shape[0])
        for h, v in self.members:
            F += v * h.evaluate(X2)
        return F[0] if single else F

    def predict(self, X: np.ndarray) -> np.ndarray:
        return threshold(self.score(X))

    def format(self, names=None) -> str:
        lines = []
        for h, v in self.members:
            if not h.rules:
                lines.append(f"w={v:.6g} : FALSE")
            for t in h.rules:
                lines.append(f"w={v:.6g} : {t.format(names)}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"members": [{"weight": v, "rules": h.to_list()} for h, v in self.members]}

    @staticmethod
    def from_dict(d: dict) -> "Ensemble":
        try:
            return Ensemble((RuleSet.from_list(m["rules"]), float(m["weight"])) for m in d["members"])
        except (KeyError, TypeError) as exc:
            raise RuleError(f"malformed ensemble record: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Ensemble":
        try:
            return Ensemble.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise RuleError(f"malformed ensemble JSON: {exc}") from None


_LINE = re.compile(r"w=([0-9.eE+-]+)\s*:\s*(FALSE|\((.*)\))\s*$")
_LIT = re.compile(r"f(\d+)=([01])")


def parse_ensemble_text(text: str) -> Ensemble:
    """Inverse of :meth:`Ensemble.format` for the unnamed ``fJ=V`` form.

    Consecutive lines with the same weight belong to the same member.
    """
    groups: List[Tuple[float, List[Conjunction]]] = []
    for lineno, line in enumerate(text.strip().splitlines(), 1):
        m = _LINE.match(line.strip())
        if not m:
            raise RuleError(f"line {lineno}: cannot parse {line!r}")
        w = float(m.group(1))
        if not groups or groups[-1][0] != w:
            groups.append((w, []))
        if m.group(2) != "FALSE":
            lits = [(int(a), int(b)) for a, b in (s.strip().split("=") for s in
                    (p.strip()[1:] for p in m.group(3).split("AND")))]
            groups[-1][1].append(Conjunction(lits))
    return Ensemble(((RuleSet(ts), w) for w, ts in groups), normalize=True)


# ------------------------------------------------------------ free functions
def eval_conjunction(t: Conjunction, x) -> int:
    return int(t.evaluate(np.asarray(x)))


def eval_ruleset(h: RuleSet, x) -> int:
    return int(h.evaluate(np.asarray(x)))


def threshold(F) -> np.ndarray:
    """``1`` iff ``F >= 1/2``.  A tiny guard absorbs float round-off in sums like 0.3+0.2."""
    return (np.asarray(F) >= 0.5 - 1e-12).astype(np.uint8)


def predict(F: Ensemble, x):
    out = F.predict(np.asarray(x))
    return int(out) if np.ndim(out) == 0 else out


def dnf_loss(h_x, y):
    """``|h(x) - y|``."""
    return np.abs(np.asarray(h_x, dtype=int) - np.asarray(y, dtype=int))


def margin_loss_from_scores(F, y) -> np.ndarray:
    """``|F - 1/2| * 1[yhat != y]`` elementwise."""
    F = np.asarray(F, dtype=float)
    y = np.asarray(y)
    wrong = threshold(F) != y
    return np.where(wrong, np.abs(F - 0.5), 0.0)


def margin_loss(F: Ensemble, x, y):
    out = margin_loss_from_scores(F.score(np.asarray(x)), y)
    return float(out) if np.ndim(out) == 0 else out


def complexity(obj) -> int:
    """Complexity of a conjunction, rule set or ensemble."""
    return obj.complexity


def accuracy(pred, y) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(y)))
