"""Synthetic detection benchmark with covariate and concept shift.

Generative model (``d``-dimensional inputs)::

    bonafide:         x = n
    spoof, attack k:  x = n + s_shared * u + s_attack * v_k
    n ~ N(m, I),  m = 0 for train/val,  m = shift * w for both test splits

``u``, ``v_0 .. v_{K+K'-1}`` and ``w`` are mutually orthonormal, drawn per
seed (QR of a Gaussian matrix).  ``u`` is the cue every attack shares,
``v_k`` is attack specific, and ``w`` carries a label-irrelevant shift of
the input distribution.  Attacks ``0..K-1`` appear in train, val and
test_seen; attacks ``K..K+K'-1`` only in test_unseen.  Each split is half
bonafide, and its spoofed half cycles evenly through the split's attacks.

File format: UTF-8 text.  Lines starting with ``#`` form the header and
carry the JSON-encoded spec and the cue vectors.  Every other line is one
example: ``split<TAB>y<TAB>attack-or-'-'<TAB>x_0<TAB>...<TAB>x_{d-1}`` with
floats printed to 17 significant digits.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .autodiff import make_rng
from .errors import DataError, ParseError

SPLITS = ("train", "val", "test_seen", "test_unseen")
FORMAT_TAG = "ibcaan-shiftbench v1"
NO_ATTACK = -1


@dataclass(frozen=True)
class SyntheticSpec:
    input_dim: int = 20
    n_train_attacks: int = 3
    n_test_attacks: int = 2
    n_train: int = 4000
    n_val: int = 1000
    n_test_seen: int = 1000
    n_test_unseen: int = 1000
    s_shared: float = 1.0
    s_attack: float = 3.0
    shift: float = 1.5
    seed: int = 0

    def validate(self) -> None:
        if not self.s_attack > self.s_shared > 0:
            raise ValueError("need s_attack > s_shared > 0 so the attack-specific cue is the stronger one")
        if self.n_train_attacks < 1 or self.n_test_attacks < 0:
            raise ValueError("need at least one training attack and a nonnegative unseen-attack count")
        needed = 2 + self.n_train_attacks + self.n_test_attacks
        if self.input_dim < needed:
            raise ValueError(f"input_dim {self.input_dim} cannot hold {needed} orthonormal directions")
        for name in ("n_train", "n_val", "n_test_seen", "n_test_unseen"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")

    def split_sizes(self) -> dict[str, int]:
        unseen = self.n_test_unseen if self.n_test_attacks > 0 else 0
        return {"train": self.n_train, "val": self.n_val,
                "test_seen": self.n_test_seen, "test_unseen": unseen}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown spec fields: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class Example:
    x: np.ndarray
    y: int
    a: int | None
    split: str


@dataclass
class Split:
    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,) 0 bonafide, 1 spoof
    a: np.ndarray  # (n,) attack index, -1 for bonafide

    def __len__(self) -> int:
        return self.y.size

    @property
    def has_both_classes(self) -> bool:
        return bool(np.any(self.y == 0) and np.any(self.y == 1))


@dataclass
class Dataset:
    spec: SyntheticSpec
    u: np.ndarray
    v: np.ndarray  # (K + K', d)
    w: np.ndarray
    splits: dict[str, Split] = field(default_factory=dict)

    def examples(self, split: str) -> Iterator[Example]:
        s = self.splits[split]
        for x, y, a in zip(s.x, s.y, s.a):
            yield Example(x, int(y), None if a == NO_ATTACK else int(a), split)


def orthonormal_cues(spec: SyntheticSpec, rng: np.random.Generator):
    k = spec.n_train_attacks + spec.n_test_attacks
    g = rng.standard_normal((spec.input_dim, k + 2))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return q[:, 0].copy(), q[:, 1:1 + k].T.copy(), q[:, -1].copy()


def generate_dataset(spec: SyntheticSpec | None = None) -> Dataset:
    spec = spec or SyntheticSpec()
    spec.validate()
    rng = make_rng(spec.seed)
    u, v, w = orthonormal_cues(spec, rng)

    basis = np.vstack([u, v, w])
    gram = basis @ basis.T
    if np.max(np.abs(gram - np.eye(len(basis)))) >= 1e-10:
        raise RuntimeError("cue vectors failed the orthonormality check")

    K, Kp = spec.n_train_attacks, spec.n_test_attacks
    ds = Dataset(spec=spec, u=u, v=v, w=w)
    for name, n in spec.split_sizes().items():
        if name == "test_unseen":
            attacks = np.arange(K, K + Kp)
        else:
            attacks = np.arange(K)
        mean = spec.shift * w if name.startswith("test") else np.zeros(spec.input_dim)

        n_bona = n // 2
        n_spoof = n - n_bona
        y = np.concatenate([np.zeros(n_bona, dtype=np.int64), np.ones(n_spoof, dtype=np.int64)])
        a = np.concatenate([np.full(n_bona, NO_ATTACK, dtype=np.int64),
                            attacks[np.arange(n_spoof) % attacks.size] if n_spoof else
                            np.zeros(0, dtype=np.int64)])
        order = rng.permutation(n)
        y, a = y[order], a[order]

        x = rng.standard_normal((n, spec.input_dim)) + mean
        spoof = y == 1
        x[spoof] += spec.s_shared * u + spec.s_attack * v[a[spoof]]
        ds.splits[name] = Split(x=x, y=y, a=a)
    return ds


def shared_cue_eer(spec: SyntheticSpec) -> float:
    """EER of the best detector that looks only at the shared direction.

    Projections onto ``u`` are N(0, 1) for bonafide and N(s_shared, 1) for
    spoof in every split, so the EER is ``Phi(-s_shared / 2)``.
    """
    return 0.5 * math.erfc(spec.s_shared / 2.0 / math.sqrt(2.0))


def write_dataset(ds: Dataset, path) -> None:
    d = ds.spec.input_dim
    cues = {"u": ds.u.tolist(), "v": ds.v.tolist(), "w": ds.w.tolist()}
    lines = [
        f"# {FORMAT_TAG}\n",
        f"# spec: {json.dumps(asdict(ds.spec), sort_keys=True)}\n",
        f"# cues: {json.dumps(cues)}\n",
        "# columns: split y attack " + " ".join(f"x{i}" for i in range(d)) + "\n",
    ]
    for name in SPLITS:
        s = ds.splits.get(name)
        if s is None:
            continue
        for x, y, a in zip(s.x, s.y, s.a):
            att = "-" if a == NO_ATTACK else str(int(a))
            vals = "\t".join(f"{v:.17g}" for v in x)
            lines.append(f"{name}\t{int(y)}\t{att}\t{vals}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_dataset(path) -> Dataset:
    spec = cues = None
    rows: dict[str, list] = {name: [] for name in SPLITS}
    saw_tag = False
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                body = line[1:].strip()
                try:
                    if body == FORMAT_TAG:
                        saw_tag = True
                    elif body.startswith("spec:"):
                        spec = SyntheticSpec.from_dict(json.loads(body[5:]))
                    elif body.startswith("cues:"):
                        cues = json.loads(body[5:])
                except (ValueError, TypeError) as exc:
                    raise ParseError(path, lineno, f"bad header: {exc}") from None
                continue
            if not line.strip():
                continue
            if spec is None or cues is None:
                raise ParseError(path, lineno, "data row before spec/cues header")
            parts = line.split("\t")
            if len(parts) != 3 + spec.input_dim:
                raise ParseError(path, lineno, f"expected {3 + spec.input_dim} fields, got {len(parts)}")
            split, y, a = parts[:3]
            if split not in rows:
                raise ParseError(path, lineno, f"unknown split {split!r}")
            try:
                yv = int(y)
                av = NO_ATTACK if a == "-" else int(a)
                xv = [float(t) for t in parts[3:]]
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if yv not in (0, 1) or (yv == 0) != (av == NO_ATTACK):
                raise ParseError(path, lineno, "attack must be '-' exactly for bonafide rows")
            rows[split].append((xv, yv, av))
    if not saw_tag or spec is None or cues is None:
        raise ParseError(path, None, "missing header (format tag, spec or cues)")

    expected = spec.split_sizes()
    for name, n in expected.items():
        if len(rows[name]) != n:
            raise DataError(f"{path}: split {name} has {len(rows[name])} rows, header spec says {n}")

    d = spec.input_dim
    ds = Dataset(spec=spec, u=np.asarray(cues["u"], dtype=np.float64),
                 v=np.asarray(cues["v"], dtype=np.float64).reshape(-1, d),
                 w=np.asarray(cues["w"], dtype=np.float64))
    for name in SPLITS:
        r = rows[name]
        ds.splits[name] = Split(
            x=np.asarray([t[0] for t in r], dtype=np.float64).reshape(len(r), d),
            y=np.asarray([t[1] for t in r], dtype=np.int64),
            a=np.asarray([t[2] for t in r], dtype=np.int64),
        )
    return ds
