"""JSON documents and the binary observation-batch format.

Complex numbers are ``[re, im]`` pairs and matrices row-major nested lists.
A batch file is a little-endian header ``(magic "MRA2", version, n, dim,
sigma, seed)`` followed by ``n * dim`` complex samples stored as
interleaved float64 ``re, im``.
"""

import csv
import hashlib
import json
import struct

import numpy as np

from .moments import GramMoment, ObservationBatch
from .rep import (AmbiguityElement, BlockSignal, Field, IsotypicBlock, Parity, RepresentationSpec,
                  SparseBasis, ValidationError)

BATCH_MAGIC = b"MRA2"
BATCH_VERSION = 1
BATCH_HEADER = struct.Struct("<4sIQQdQ")


def complex_to_json(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def complex_from_json(doc):
    a = np.asarray(doc, dtype=float)
    if a.ndim == 0 or a.shape[-1] != 2:
        raise ValidationError("complex arrays must end in [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def spec_to_dict(spec):
    return {
        "blocks": [{"dim": b.dim, "mult": b.mult, "parity": b.parity.value} for b in spec.blocks],
        "field": spec.field.value,
    }


def spec_from_dict(doc):
    try:
        blocks = tuple(IsotypicBlock(int(b["dim"]), int(b["mult"]), Parity(b.get("parity", "none")))
                       for b in doc["blocks"])
        return RepresentationSpec(blocks, Field(doc.get("field", "complex")))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed spec document: {exc}") from exc


def signal_to_dict(f):
    return {"spec": spec_to_dict(f.spec), "matrices": [complex_to_json(a) for a in f.matrices]}


def signal_from_dict(doc):
    spec = spec_from_dict(doc["spec"])
    return BlockSignal(spec, tuple(complex_from_json(a).reshape(b.dim, b.mult)
                                   for a, b in zip(doc["matrices"], spec.blocks)))


def gram_to_dict(g):
    return {"spec": spec_to_dict(g.spec), "grams": [complex_to_json(m) for m in g.grams]}


def gram_from_dict(doc):
    spec = spec_from_dict(doc["spec"])
    return GramMoment(spec, tuple(complex_from_json(m).reshape(b.mult, b.mult)
                                  for m, b in zip(doc["grams"], spec.blocks)))


def ambiguity_to_dict(h):
    return {"spec": spec_to_dict(h.spec), "factors": [complex_to_json(u) for u in h.factors]}


def ambiguity_from_dict(doc):
    spec = spec_from_dict(doc["spec"])
    return AmbiguityElement(spec, tuple(complex_from_json(u).reshape(b.dim, b.dim)
                                        for u, b in zip(doc["factors"], spec.blocks)))


def basis_to_dict(basis):
    return {"spec": spec_to_dict(basis.spec), "basis": complex_to_json(basis.basis)}


def basis_from_dict(doc):
    spec = spec_from_dict(doc["spec"])
    return SparseBasis(spec, complex_from_json(doc["basis"]).reshape(spec.N, spec.N))


def problem_to_dict(problem):
    from dataclasses import asdict
    return {
        "spec": spec_to_dict(problem.spec),
        "grams": gram_to_dict(problem.grams),
        "basis": basis_to_dict(problem.basis),
        "K": problem.K,
        "options": asdict(problem.options),
    }


def problem_from_dict(doc):
    from .solver import RecoveryProblem, SolverOptions
    return RecoveryProblem(spec_from_dict(doc["spec"]), gram_from_dict(doc["grams"]),
                           basis_from_dict(doc["basis"]), int(doc["K"]),
                           SolverOptions(**doc.get("options", {})))


def dumps(doc):
    """Canonical JSON text (sorted keys) so equal documents are byte-equal."""
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def write_batch(path, batch):
    samples = np.ascontiguousarray(batch.samples, dtype="<c16")
    n, dim = samples.shape
    with open(path, "wb") as fh:
        fh.write(BATCH_HEADER.pack(BATCH_MAGIC, BATCH_VERSION, n, dim, float(batch.sigma), int(batch.seed)))
        fh.write(samples.view("<f8").tobytes())


def read_batch(path, model=None):
    """Returns ``(samples, sigma, seed)`` or an :class:`ObservationBatch` when
    ``model`` is given."""
    with open(path, "rb") as fh:
        head = fh.read(BATCH_HEADER.size)
        if len(head) != BATCH_HEADER.size:
            raise ValidationError("truncated batch header")
        magic, version, n, dim, sigma, seed = BATCH_HEADER.unpack(head)
        if magic != BATCH_MAGIC:
            raise ValidationError(f"bad magic {magic!r}")
        if version != BATCH_VERSION:
            raise ValidationError(f"unsupported batch version {version}")
        body = np.frombuffer(fh.read(), dtype="<f8")
    if body.size != 2 * n * dim:
        raise ValidationError(f"batch body holds {body.size} floats, expected {2 * n * dim}")
    samples = body.view("<c16").reshape(n, dim).astype(complex)
    if model is None:
        return samples, sigma, seed
    return ObservationBatch(model, samples, sigma, seed)


def write_trace_csv(path, traces):
    """Solver traces as rows ``restart,iteration,residual,violation``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["restart", "iteration", "residual", "violation"])
        for r, trace in enumerate(traces):
            for it, resid, viol in trace:
                w.writerow([r, it, repr(float(resid)), repr(float(viol))])
