"""File formats: JSON-Lines datasets, JSON checkpoints, flat config files, CSV."""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import json
import math
import time
import typing
from pathlib import Path

import numpy as np

from . import nn
from .errors import CheckpointError, InputDomainError
from .graphon import Dataset, Graph, GraphonSpec
from .train import Checkpoint, TrainConfig

CHECKPOINT_FORMAT = "ignr-checkpoint"
CHECKPOINT_VERSION = 1

# lines starting with this prefix carry run metadata (timestamps, timings)
META_PREFIX = "#"


# ---------------------------------------------------------------------------
# datasets


def dataset_records(ds: Dataset) -> list:
    prov_spec = ds.provenance.get("spec")
    family = ds.provenance.get("family")
    out = []
    for k, g in enumerate(ds.graphs):
        lab = ds.labels[k] if ds.labels else {}
        rec = {"n": g.n, "edges": g.edges().tolist(), "alpha": lab.get("alpha"),
               "seed": lab.get("seed")}
        spec = lab.get("spec") or prov_spec
        if spec is None and family is not None and rec["alpha"] is not None:
            spec = f"{family}:{rec['alpha']!r}"
        if spec is not None:
            rec["spec"] = spec
        out.append(rec)
    return out


def save_dataset(path, ds: Dataset) -> None:
    with open(path, "w") as f:
        for rec in dataset_records(ds):
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _family_of(spec_text):
    kind = spec_text.partition(":")[0]
    return {"two_block": "s1", "s1": "s1", "noisy_ring": "s2", "s2": "s2"}.get(kind)


def load_dataset(path) -> Dataset:
    """Read a JSON-Lines dataset; malformed lines raise :class:`CheckpointError`."""
    graphs, labels, specs = [], [], set()
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CheckpointError(f"cannot read dataset {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            n = int(rec["n"])
            graphs.append(Graph.from_edges(n, rec.get("edges", [])))
        except (ValueError, KeyError, TypeError, InputDomainError) as exc:
            raise CheckpointError(f"{path}:{lineno}: bad graph record ({exc})") from exc
        lab = {"alpha": rec.get("alpha"), "seed": rec.get("seed")}
        if "spec" in rec:
            lab["spec"] = rec["spec"]
            specs.add(_family_of(rec["spec"]) or rec["spec"])
        labels.append(lab)
    if not graphs:
        raise CheckpointError(f"{path}: dataset is empty")
    prov = {}
    if len(specs) == 1:
        only = specs.pop()
        prov = {"family": only} if only in ("s1", "s2") else {"spec": only}
    return Dataset(graphs, labels, prov)


# ---------------------------------------------------------------------------
# checkpoints


def _tensor_json(a: np.ndarray) -> dict:
    # json writes floats with repr(), the shortest string that round-trips
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _network_json(p: nn.ParamSet) -> dict:
    attrs = {f.name: getattr(p, f.name) for f in dataclasses.fields(p) if f.name != "tensors"}
    return {"kind": p.kind, "attrs": attrs,
            "tensors": {k: _tensor_json(v) for k, v in sorted(p.tensors.items())}}


def _network_from_json(d: dict) -> nn.ParamSet:
    cls = nn.PARAM_TYPES[d["kind"]]
    tensors = {}
    for k, t in d["tensors"].items():
        arr = np.array(t["data"], dtype=np.float64)
        shape = tuple(int(s) for s in t["shape"])
        if arr.size != math.prod(shape):
            raise CheckpointError(f"tensor {k}: {arr.size} values for shape {shape}")
        tensors[k] = arr.reshape(shape)
    return cls(tensors, **d.get("attrs", {}))


def checkpoint_json(ck: Checkpoint) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": ck.config.to_dict(),
        "solver_options": ck.config.solver_options().to_dict(),
        "networks": {name: _network_json(p) for name, p in sorted(ck.networks.items())},
        "loss_history": [float(x) for x in ck.loss_history],
        "rng_digest": ck.rng_digest,
    }


def save_checkpoint(path, ck: Checkpoint) -> None:
    with open(path, "w") as f:
        json.dump(checkpoint_json(ck), f, indent=1)
        f.write("\n")


def load_checkpoint(path) -> Checkpoint:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot parse checkpoint {path}: {exc}") from exc
    if not isinstance(d, dict) or d.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a checkpoint file")
    if d.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {d.get('version')!r} is not supported "
                              f"(expected {CHECKPOINT_VERSION})")
    try:
        cfg = TrainConfig.from_dict(d["config"])
        nets = {name: _network_from_json(v) for name, v in d["networks"].items()}
        hist = [float(x) for x in d["loss_history"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    if "decoder" not in nets:
        raise CheckpointError(f"{path}: checkpoint has no decoder")
    return Checkpoint(nets, cfg, hist, str(d.get("rng_digest", "")))


# ---------------------------------------------------------------------------
# flat key = value config files


def _convert(name, raw, typ):
    raw = raw.strip()
    origin = typing.get_origin(typ)
    if origin is typing.Union:
        args = [a for a in typing.get_args(typ) if a is not type(None)]
        if raw.lower() in ("none", ""):
            return None
        typ = args[0]
    if typ is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise InputDomainError(f"{name}: expected a boolean, got {raw!r}")
    if typ is tuple or typing.get_origin(typ) is tuple:
        return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    try:
        return typ(raw)
    except ValueError:
        raise InputDomainError(f"{name}: cannot convert {raw!r} to {typ.__name__}") from None


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines into typed :class:`TrainConfig` fields.

    Blank lines and ``#`` comments are ignored; tuples are comma-separated.
    """
    hints = typing.get_type_hints(TrainConfig)
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise InputDomainError(f"config line {lineno}: expected key = value")
        if key not in hints:
            raise InputDomainError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, value, hints[key])
    return out


def load_config(path) -> dict:
    try:
        return parse_config(Path(path).read_text())
    except OSError as exc:
        raise InputDomainError(f"cannot read config {path}: {exc}") from exc


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CSV with a single metadata line


def meta_line(**fields) -> str:
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    extra = " ".join(f"{k}={v}" for k, v in fields.items())
    return f"{META_PREFIX} written {stamp} {extra}".rstrip()


def write_csv(path, header, rows, **meta) -> None:
    buf = _io.StringIO()
    buf.write(meta_line(**meta) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    Path(path).write_text(buf.getvalue())


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return x


def read_csv(path) -> tuple:
    """``(header, rows)`` of a CSV written by :func:`write_csv`; metadata lines skipped."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith(META_PREFIX)]
    rows = list(csv.reader(lines))
    if not rows:
        raise CheckpointError(f"{path}: no header")
    return rows[0], rows[1:]


def save_loss_history(path, history) -> None:
    write_csv(path, ["epoch", "mean_gw2"], [(i, float(v)) for i, v in enumerate(history)])


def spec_from_text(text: str):
    """A :class:`GraphonSpec` for ``benchmark:K`` style strings, or a family name."""
    if text in ("s1", "s2"):
        return text
    return GraphonSpec.parse(text)
