"""Representation similarity: SVD truncation to the dominant directions of
each activation matrix, then canonical correlation analysis between the
pruned subspaces, summarized by the mean canonical correlation."""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass

import numpy as np

from . import binio

logger = logging.getLogger(__name__)

ACTIVATIONS_FORMAT_VERSION = 1
RIDGE_SCALE = 1e-8


@dataclass
class ActivationMatrix:
    """N sampled frames by d units for one layer of one checkpoint."""

    layer_name: str
    data: np.ndarray
    source: tuple[str, int] = ("", 0)   # (model id, checkpoint step)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("activation data must be [N, d]")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("activation data must be finite")
        n, d = self.data.shape
        if n <= d:
            logger.warning("layer %s: only %d points for %d dims; correlations may be inflated",
                           self.layer_name, n, d)


@dataclass
class SvccaResult:
    canonical_correlations: np.ndarray  # descending, each in [0, 1]
    mean_rho: float
    kept_dims: tuple[int, int]


def svd_prune(acts: ActivationMatrix, variance_fraction: float = 0.99) -> ActivationMatrix:
    """Project mean-centered data onto the smallest set of top singular
    directions holding at least the requested fraction of squared singular
    value energy."""
    if not 0.0 < variance_fraction <= 1.0:
        raise ValueError("variance_fraction must lie in (0, 1]")
    centered = acts.data - acts.data.mean(axis=0, keepdims=True)
    if not np.any(centered):
        raise ValueError(f"layer {acts.layer_name}: all-zero (constant) activations")
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    energy = s * s
    cumulative = np.cumsum(energy) / energy.sum()
    k = int(np.searchsorted(cumulative, variance_fraction - 1e-12) + 1)
    k = min(k, int(np.sum(s > 0)))
    return ActivationMatrix(layer_name=acts.layer_name, data=centered @ vt[:k].T,
                            source=acts.source)


def _inv_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.maximum(vals, np.finfo(np.float64).tiny)
    return (vecs / np.sqrt(vals)) @ vecs.T


def cca(a: ActivationMatrix, b: ActivationMatrix) -> SvccaResult:
    """Canonical correlations via SVD of the whitened cross-covariance.

    Covariances are ridge-regularized with eps = 1e-8 * trace / d so
    whitening stays defined on low-rank activations.
    """
    if a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"point counts differ: {a.data.shape[0]} vs {b.data.shape[0]}")
    n = a.data.shape[0]
    if n < 2:
        raise ValueError("need at least two data points")
    xa = a.data - a.data.mean(axis=0, keepdims=True)
    xb = b.data - b.data.mean(axis=0, keepdims=True)
    saa = xa.T @ xa / (n - 1)
    sbb = xb.T @ xb / (n - 1)
    sab = xa.T @ xb / (n - 1)
    da, db = saa.shape[0], sbb.shape[0]
    saa = saa + (RIDGE_SCALE * np.trace(saa) / da) * np.eye(da)
    sbb = sbb + (RIDGE_SCALE * np.trace(sbb) / db) * np.eye(db)
    whitened = _inv_sqrt(saa) @ sab @ _inv_sqrt(sbb)
    rho = np.linalg.svd(whitened, compute_uv=False)
    rho = np.clip(rho, 0.0, 1.0)[: min(da, db)]
    return SvccaResult(canonical_correlations=rho, mean_rho=float(rho.mean()),
                       kept_dims=(da, db))


def svcca(a: ActivationMatrix, b: ActivationMatrix,
          variance_fraction: float = 0.99) -> SvccaResult:
    """SVD-prune both inputs, then correlate the pruned subspaces."""
    pa = svd_prune(a, variance_fraction)
    pb = svd_prune(b, variance_fraction)
    result = cca(pa, pb)
    return SvccaResult(canonical_correlations=result.canonical_correlations,
                       mean_rho=result.mean_rho,
                       kept_dims=(pa.data.shape[1], pb.data.shape[1]))


@dataclass
class SvccaReport:
    """Per (layer, step) correlation trajectories of two training runs and
    their difference."""

    layers: list[str]
    steps: list[int]
    rho_a: dict[tuple[str, int], float]
    rho_b: dict[tuple[str, int], float]

    def diff(self, layer: str, step: int) -> float:
        return self.rho_a[(layer, step)] - self.rho_b[(layer, step)]

    def mean_abs_diff(self, layer: str) -> float:
        return float(np.mean([abs(self.diff(layer, s)) for s in self.steps]))

    def rows(self) -> list[tuple[str, int, float, float, float]]:
        return [(layer, step, self.rho_a[(layer, step)], self.rho_b[(layer, step)],
                 self.diff(layer, step))
                for layer in self.layers for step in self.steps]

    def to_text(self) -> str:
        lines = ["layer\tstep\trho_run_a\trho_run_b\tdiff"]
        for layer, step, ra, rb, d in self.rows():
            lines.append(f"{layer}\t{step}\t{ra!r}\t{rb!r}\t{d!r}")
        lines.append("")
        lines.append("layer\tmean_abs_diff")
        for layer in self.layers:
            lines.append(f"{layer}\t{self.mean_abs_diff(layer)!r}")
        return "\n".join(lines) + "\n"


def correlation_trajectory(run_a: list[tuple[int, object]], run_b: list[tuple[int, object]],
                           probe_corpus, layers: list[str], n_frames: int, seed: int,
                           variance_fraction: float = 0.99,
                           dump_dir=None, run_names: tuple[str, str] = ("run_a", "run_b"),
                           ) -> SvccaReport:
    """Layer-wise convergence trajectories of two runs over shared probe frames.

    For each run, every checkpoint is correlated against that run's final
    checkpoint; the report also carries the difference between the two runs'
    trajectories. Steps missing from either run are skipped with a warning.

    With ``dump_dir`` set, per-checkpoint activation dumps are persisted as
    files and reused on later calls instead of recomputed.
    """
    from pathlib import Path

    from .training import activation_frame_indices, dump_activations

    a_by_step = dict(run_a)
    b_by_step = dict(run_b)
    steps = sorted(set(a_by_step) & set(b_by_step))
    for step in sorted(set(a_by_step) ^ set(b_by_step)):
        logger.warning("checkpoint step %d present in only one run; skipped", step)
    if not steps:
        raise ValueError("runs share no checkpoint steps")

    def acts_for(tag, run_by_step):
        out = {}
        for step, ckpt in run_by_step.items():
            path = None
            if dump_dir is not None:
                path = Path(dump_dir) / f"{tag}_step_{step:04d}.ekda"
                if path.exists():
                    out[step], _ = load_activations(path)
                    continue
            acts = dump_activations(ckpt, probe_corpus, n_frames, seed, source=(tag, step))
            if path is not None:
                total = sum(u.num_frames for u in probe_corpus.utterances)
                save_activations(path, acts, activation_frame_indices(total, n_frames, seed))
            out[step] = acts
        return out

    if dump_dir is not None:
        Path(dump_dir).mkdir(parents=True, exist_ok=True)
    acts_a = acts_for(run_names[0], {s: a_by_step[s] for s in steps})
    acts_b = acts_for(run_names[1], {s: b_by_step[s] for s in steps})
    final = steps[-1]
    rho_a: dict[tuple[str, int], float] = {}
    rho_b: dict[tuple[str, int], float] = {}
    for layer in layers:
        for step in steps:
            rho_a[(layer, step)] = svcca(acts_a[step][layer], acts_a[final][layer],
                                         variance_fraction).mean_rho
            rho_b[(layer, step)] = svcca(acts_b[step][layer], acts_b[final][layer],
                                         variance_fraction).mean_rho
    return SvccaReport(layers=list(layers), steps=steps, rho_a=rho_a, rho_b=rho_b)


# -- activation dump files ----------------------------------------------------

def save_activations(path, acts: dict[str, ActivationMatrix], frame_indices) -> None:
    names = sorted(acts)
    header = {
        "layers": names,
        "frame_indices": [int(i) for i in np.asarray(frame_indices)],
        "sources": {name: list(acts[name].source) for name in names},
    }
    records = []
    for name in names:
        meta = json.dumps({"layer": name, "shape": list(acts[name].data.shape)},
                          sort_keys=True, separators=(",", ":")).encode()
        records.append(struct.pack("<Q", len(meta)) + meta + binio.pack_floats(acts[name].data))
    binio.write_container(path, "activations", ACTIVATIONS_FORMAT_VERSION, header, records)


def load_activations(path) -> tuple[dict[str, ActivationMatrix], np.ndarray]:
    header, records = binio.read_container(path, "activations", ACTIVATIONS_FORMAT_VERSION)
    out: dict[str, ActivationMatrix] = {}
    for rec in records:
        (mlen,) = struct.unpack("<Q", rec[:8])
        meta = json.loads(rec[8:8 + mlen])
        shape = tuple(meta["shape"])
        blob = rec[8 + mlen:]
        if len(blob) != int(np.prod(shape)) * 8:
            raise binio.FormatError(f"{path}: corrupted record (activation blob size)")
        source = tuple(header["sources"][meta["layer"]])
        out[meta["layer"]] = ActivationMatrix(meta["layer"], binio.unpack_floats(blob, shape),
                                              (source[0], int(source[1])))
    return out, np.asarray(header["frame_indices"], dtype=np.int64)
