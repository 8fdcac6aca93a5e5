"""Dataset parsing, synthetic data generation, and artifact serialization.

Two on-disk formats are owned here:

* Triple text files: a ``N T`` header line followed by ``i j t v`` lines,
  whitespace-separated, v in {0, 1}.  Comments (#) and blank lines are
  allowed.

* Factor binaries: magic ``PLTF``, version byte 1, little-endian
  throughout.  Layout after the magic and version:

      kind        u8      0 = single factor set, 1 = sample set
      n_objects   u32
      n_relations u32
      rank        u32
      n_draws     u32
      n_diag      u32     per-sweep log-likelihood count (0 for kind 0)
      diag        f64 * n_diag
      draws       n_draws records of: alpha f64, then U, V, R as
                  row-major f64 blocks of N*D, N*D, T*D entries

Both formats round-trip losslessly (bitwise for float payloads).
"""

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import FormatError, TripleParseError
from .gibbs import HyperPriors, SampleSet, _sample_mvn_from_precision, _sample_wishart, _chol_jitter
from .model import LatentFactors
from .rng import substream
from .tensor import RelationalTensor

MAGIC = b"PLTF"
FORMAT_VERSION = 1
_KIND_FACTORS = 0
_KIND_SAMPLES = 1


def load_triples(path, *, drop_self_pairs: bool = False,
                 symmetrize: bool = False) -> RelationalTensor:
    """Parse a triple text file into a tensor.

    ``drop_self_pairs`` skips (i, i) observations; ``symmetrize`` mirrors
    every (i, j) observation onto (j, i).
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    header_idx = None
    for idx, line in enumerate(lines):
        if line.strip() and not line.lstrip().startswith("#"):
            header_idx = idx
            break
    if header_idx is None:
        raise TripleParseError("no header line found")
    parts = lines[header_idx].split()
    if len(parts) != 2:
        raise TripleParseError("header must be 'N T'", header_idx + 1)
    try:
        n_objects, n_relations = int(parts[0]), int(parts[1])
    except ValueError:
        raise TripleParseError("header must hold two integers", header_idx + 1) from None
    if n_objects < 1 or n_relations < 1:
        raise TripleParseError("header dimensions must be positive", header_idx + 1)

    triples = []
    for offset, line in enumerate(lines[header_idx + 1:], start=header_idx + 2):
        body = line.strip()
        if not body or body.startswith("#"):
            continue
        parts = body.split()
        if len(parts) != 4:
            raise TripleParseError(f"expected 'i j t v', got {body!r}", offset)
        try:
            i, j, t, v = (int(p) for p in parts)
        except ValueError:
            raise TripleParseError(f"non-integer field in {body!r}", offset) from None
        if not (0 <= i < n_objects and 0 <= j < n_objects):
            raise TripleParseError(
                f"object index out of range for N={n_objects}: {body!r}", offset)
        if not (0 <= t < n_relations):
            raise TripleParseError(
                f"relation index out of range for T={n_relations}: {body!r}", offset)
        if v not in (0, 1):
            raise TripleParseError(f"value must be 0 or 1: {body!r}", offset)
        if drop_self_pairs and i == j:
            continue
        triples.append((i, j, t, v))
        if symmetrize and i != j:
            triples.append((j, i, t, v))
    return RelationalTensor.build(n_objects, n_relations, triples)


def save_triples(tensor: RelationalTensor, path) -> None:
    """Write a tensor as a triple text file (sorted keys, LF endings)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{tensor.n_objects} {tensor.n_relations}\n")
        for (i, j, t) in tensor.observed_keys():
            fh.write(f"{i} {j} {t} {tensor.value_at(i, j, t)}\n")


def _write_matrix(fh, mat: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated factor file while reading {what}")
    return data


def _read_matrix(fh, rows: int, cols: int, what: str) -> np.ndarray:
    data = _read_exact(fh, rows * cols * 8, what)
    return np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()


def save_factors(obj, path) -> None:
    """Serialize a LatentFactors or SampleSet to the binary factor format."""
    if isinstance(obj, LatentFactors):
        kind, draws, diagnostics = _KIND_FACTORS, [obj], []
    elif isinstance(obj, SampleSet):
        if not obj.draws:
            raise ValueError("cannot serialize an empty sample set")
        kind, draws, diagnostics = _KIND_SAMPLES, obj.draws, list(obj.log_likelihoods)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    first = draws[0]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", FORMAT_VERSION, kind))
        fh.write(struct.pack("<IIIII", first.n_objects, first.n_relations,
                             first.rank, len(draws), len(diagnostics)))
        if diagnostics:
            fh.write(np.asarray(diagnostics, dtype="<f8").tobytes())
        for factors in draws:
            fh.write(struct.pack("<d", factors.alpha))
            _write_matrix(fh, factors.U)
            _write_matrix(fh, factors.V)
            _write_matrix(fh, factors.R)


def load_factors(path):
    """Load a factor binary; returns LatentFactors or SampleSet per its kind."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, kind = struct.unpack("<BB", _read_exact(fh, 2, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}")
        if kind not in (_KIND_FACTORS, _KIND_SAMPLES):
            raise FormatError(f"unknown payload kind {kind}")
        n, T, d, n_draws, n_diag = struct.unpack("<IIIII", _read_exact(fh, 20, "header"))
        if n_draws < 1:
            raise FormatError("factor file holds no draws")
        diag = []
        if n_diag:
            diag = list(np.frombuffer(_read_exact(fh, 8 * n_diag, "diagnostics"), dtype="<f8"))
        draws = []
        for k in range(n_draws):
            (alpha,) = struct.unpack("<d", _read_exact(fh, 8, f"alpha of draw {k}"))
            U = _read_matrix(fh, n, d, f"U of draw {k}")
            V = _read_matrix(fh, n, d, f"V of draw {k}")
            R = _read_matrix(fh, T, d, f"R of draw {k}")
            draws.append(LatentFactors(U, V, R, alpha))
        trailing = fh.read(1)
        if trailing:
            raise FormatError("trailing bytes after factor payload")
    if kind == _KIND_FACTORS:
        return draws[0]
    return SampleSet(draws=draws, log_likelihoods=diag)


@dataclass
class SynthSpec:
    """Synthetic dataset description.

    Data follow the model's own generative process: Gaussian-Wishart
    hyperparameter draws, Gaussian factor rows, a Gamma noise precision,
    Gaussian entries, then binarization of the real entries at
    ``binarize_threshold`` (on the raw reconstruction scale; the default 0
    matches a logistic probability of one half) and uniform subsampling to
    ``observed_fraction``.
    """

    n_objects: int
    n_relations: int
    rank: int
    observed_fraction: float = 1.0
    binarize_threshold: float = 0.0
    seed: int = 0
    hyperpriors: Optional[HyperPriors] = None

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not 0 < self.observed_fraction <= 1:
            raise ValueError("observed_fraction must be in (0, 1]")
        if self.n_objects < 1 or self.n_relations < 1:
            raise ValueError("dimensions must be positive")


def generate_synthetic(spec: SynthSpec):
    """Draw a synthetic tensor plus its ground-truth factors.

    Returns ``(tensor, truth)``; deterministic per seed.
    """
    tensor, truth, _reals = _generate(spec)
    return tensor, truth


def synthetic_reals(spec: SynthSpec) -> np.ndarray:
    """The dense pre-threshold real entries behind :func:`generate_synthetic`.

    Same seed, same draw; useful for checking generator symmetry.
    """
    return _generate(spec)[2]


def _generate(spec: SynthSpec):
    d = spec.rank
    priors = spec.hyperpriors if spec.hyperpriors is not None else HyperPriors.default(d)
    if priors.rank != d:
        raise ValueError(f"hyperprior rank {priors.rank} does not match spec rank {d}")
    rng = substream(spec.seed, "synthetic")

    def factor_rows(count, kappa):
        precision = _sample_wishart(rng, priors.w0, priors.nu0)
        mu = _sample_mvn_from_precision(rng, priors.mu0, _chol_jitter(kappa * precision))
        chol = _chol_jitter(precision)
        rows = np.empty((count, d))
        for k in range(count):
            rows[k] = _sample_mvn_from_precision(rng, mu, chol)
        return rows

    n, T = spec.n_objects, spec.n_relations
    U = factor_rows(n, priors.kappa0)
    V = factor_rows(n, priors.kappa0)
    R = factor_rows(T, priors.kappa_t)
    alpha = float(rng.gamma(priors.gamma_shape, priors.gamma_scale))
    truth = LatentFactors(U, V, R, alpha)

    means = np.einsum("id,jd,td->ijt", U, V, R)
    reals = means + rng.standard_normal((n, n, T)) / np.sqrt(alpha)
    labels = (reals > spec.binarize_threshold).astype(np.int64)

    total = n * n * T
    n_observed = int(round(spec.observed_fraction * total))
    flat = rng.choice(total, size=n_observed, replace=False)
    flat.sort()
    ii, jj, tt = np.unravel_index(flat, (n, n, T))
    triples = [(int(i), int(j), int(t), int(labels[i, j, t]))
               for i, j, t in zip(ii, jj, tt)]
    return RelationalTensor.build(n, T, triples), truth, reals
