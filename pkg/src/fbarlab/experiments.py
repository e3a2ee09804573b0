"""Config-driven experiments with reproducible CSV outputs and run manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
import yaml

from . import __version__
from .cascade import Cascade, lln_check, level_fbar_bounds, nu_entropy, sample_nu_pair
from .circle import TailSearchParams, build_geometric_cascade, sample_mu_n, shipped_halving_example
from .cocycle import families, top_lyapunov
from .errors import ConfigError, ExperimentError, FbarLabError, MissingOutputsError
from .fbar import fbar_coupling_upper
from .symdyn import BernoulliVector, as_rng

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": ["zero-exponent-path", "cauchy-table", "furstenberg", "lln"]},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "params": {"type": "object"},
    },
}

_prob = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}
_pos = {"type": "integer", "minimum": 1}

PARAM_SCHEMAS = {
    "zero-exponent-path": {
        "type": "object", "additionalProperties": False,
        "properties": {"start": _prob, "end": _prob, "points": {"type": "integer", "minimum": 2},
                       "levels": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 1}},
                       "ms": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                       "steps": _pos, "L1": {"type": "number", "exclusiveMinimum": 0}},
    },
    "cauchy-table": {
        "type": "object", "additionalProperties": False,
        "properties": {"base_size": _pos, "target_size": _pos, "base_len": _pos,
                       "ms": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                       "K": {"type": "number", "minimum": 0}, "p": _prob,
                       "pairs": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                                           "minItems": 2, "maxItems": 2}},
                       "window": _pos, "trials": {"type": "integer", "minimum": 2}},
    },
    "furstenberg": {
        "type": "object", "additionalProperties": False,
        "properties": {"steps": {"type": "array", "items": _pos, "minItems": 1}, "trials": {"type": "integer", "minimum": 2}},
    },
    "lln": {
        "type": "object", "additionalProperties": False,
        "properties": {"delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                       "vectors": _pos, "trials": _pos, "horizon": _pos, "alphabet": {"type": "integer", "minimum": 2}},
    },
}

DEFAULTS = {
    "zero-exponent-path": {"start": [1, 0, 0, 0, 0, 0, 0], "end": [1, 1, 1, 1, 1, 1, 1], "points": 5,
                           "levels": [0, 1], "ms": [2, 2], "steps": 20000, "L1": 1.0},
    "cauchy-table": {"base_size": 2, "target_size": 2, "base_len": 64, "ms": [2, 2, 3, 3], "K": 0.05,
                     "p": [0.5, 0.5], "pairs": [[0, 1], [0, 4], [1, 2], [2, 4], [3, 4]],
                     "window": 16384, "trials": 20},
    "furstenberg": {"steps": [10**4, 10**5, 10**6], "trials": 8},
    "lln": {"delta": 0.1, "vectors": 20, "trials": 10000, "horizon": 1000, "alphabet": 2},
}


def load_config(source) -> dict:
    """Read a JSON or YAML config (or the ``config`` entry of a manifest) and validate it."""
    if isinstance(source, dict):
        cfg = source
    else:
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            cfg = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if isinstance(cfg, dict) and "config" in cfg and "outputs" in cfg:
        cfg = cfg["config"]
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
        jsonschema.validate(cfg.get("params", {}), PARAM_SCHEMAS[cfg["experiment"]])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected: {exc.message}") from exc
    params = dict(DEFAULTS[cfg["experiment"]])
    params.update(cfg.get("params", {}))
    return {"experiment": cfg["experiment"], "seed": int(cfg.get("seed", 0)),
            "params": params, **({"output_dir": cfg["output_dir"]} if "output_dir" in cfg else {})}


def _vec(x) -> BernoulliVector:
    a = np.asarray(x, dtype=float)
    if a.sum() <= 0:
        raise ConfigError("probability vectors need positive mass")
    return BernoulliVector(a / a.sum())


@dataclass
class Table:
    name: str
    header: list
    rows: list

    def to_csv(self) -> bytes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue().encode()


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x) + 0.0)
    return x


# experiments

def exp_zero_exponent_path(params: dict, seed: int) -> tuple[list[Table], dict]:
    sys, cert = shipped_halving_example()
    ms = tuple(params["ms"])
    levels = sorted(set(params["levels"]))
    casc, certs = build_geometric_cascade(sys, cert, ms, TailSearchParams(L1=params["L1"]),
                                          levels=max(levels))
    p0, p1 = np.asarray(params["start"], float), np.asarray(params["end"], float)
    if p0.size != len(cert.words) or p1.size != len(cert.words):
        raise ConfigError(f"endpoints must have {len(cert.words)} entries")
    p0, p1 = p0 / p0.sum(), p1 / p1.sum()
    rng = as_rng(seed)
    rows = []
    for i, t in enumerate(np.linspace(0.0, 1.0, params["points"])):
        p = BernoulliVector.normalized((1 - t) * p0 + t * p1)
        for n in levels:
            ent = nu_entropy(casc, p, n, L1_alpha=params["L1"] * abs(cert.alpha))
            orb = sample_mu_n(sys, casc, p, n, params["steps"], rng.spawn(i).spawn(n), cert=certs[n],
                              observables=())
            c = certs[n]
            rows.append([float(t), n, p.entropy(), ent.value, ent.geometric_floor,
                         orb.summary["exponent"], orb.summary["exponent_se"],
                         c.alpha - c.eps, c.alpha + c.eps])
    header = ["t", "level", "h_p", "entropy", "entropy_floor", "exponent", "exponent_se", "band_lo", "band_hi"]
    summary = {"certificates": [{"level": n, "alpha": c.alpha, "eps": c.eps, "spectrum": list(c.spectrum)}
                                for n, c in enumerate(certs)]}
    return [Table("path", header, rows)], summary


def exp_cauchy_table(params: dict, seed: int) -> tuple[list[Table], dict]:
    casc = Cascade.synthetic(params["base_size"], params["target_size"], params["base_len"],
                             params["ms"], params["K"])
    p = _vec(params["p"])
    rng = as_rng(seed)
    rows = []
    for i, (k, l) in enumerate(params["pairs"]):
        b = level_fbar_bounds(casc, p, p, k, l)
        # for k = 0 both the kickoff and the level-gap bound apply; report the sharper one
        key = "kickoff" if k == 0 and b["kickoff"]["value"] < b["level_gap"]["value"] else "level_gap"
        bound = b[key]["value"]
        est = fbar_coupling_upper(None, None, params["window"], params["trials"], rng.spawn(i),
                                  coupling=lambda n, r, k=k, l=l: sample_nu_pair(casc, p, k, l, n, r))
        ok = est.value <= bound + 3 * est.stderr
        rows.append([k, l, est.value, est.stderr, bound, key, b[key]["formula"], ok])
    header = ["k", "l", "measured", "stderr", "bound", "bound_id", "formula", "ok"]
    return [Table("cauchy", header, rows)], {"K": casc.K, "ms": list(casc.ms)}


def exp_furstenberg(params: dict, seed: int) -> tuple[list[Table], dict]:
    rows = []
    expect = {"rotations": "zero", "diag-quarter-turn": "zero", "transverse-hyperbolic": "positive"}
    for i, (name, (fam, p)) in enumerate(families().items()):
        for j, n in enumerate(params["steps"]):
            est = top_lyapunov(fam, p, int(n), params["trials"], as_rng(seed).spawn(i).spawn(j))
            rows.append([name, int(n), est.value, est.stderr, est.vector_value, expect[name]])
    header = ["family", "steps", "lyapunov", "stderr", "vector_check", "expected"]
    return [Table("furstenberg", header, rows)], {}


def exp_lln(params: dict, seed: int) -> tuple[list[Table], dict]:
    rng = as_rng(seed)
    vecs = rng.spawn(0).generator.dirichlet(np.ones(params["alphabet"]), params["vectors"])
    rows = []
    L = None
    for i, v in enumerate(vecs):
        rep = lln_check(BernoulliVector(v / v.sum()), params["horizon"], params["delta"], params["trials"],
                        rng.spawn(i + 1), L=L)
        L = rep.L
        rows.append([i, ";".join(f"{x:.6f}" for x in v), rep.L, rep.series, rep.good_mass, rep.stderr,
                     rep.good_mass >= 1 - params["delta"]])
    header = ["vector", "p", "L", "series", "good_mass", "stderr", "ok"]
    return [Table("lln", header, rows)], {"L": L}


EXPERIMENTS: dict[str, Callable] = {
    "zero-exponent-path": exp_zero_exponent_path,
    "cauchy-table": exp_cauchy_table,
    "furstenberg": exp_furstenberg,
    "lln": exp_lln,
}


# manifests

@dataclass
class RunManifest:
    config: dict
    seed: int
    version: str
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    path: str = ""

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out.pop("path")
        return out

    @classmethod
    def load(cls, path) -> "RunManifest":
        p = Path(path)
        try:
            obj = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise MissingOutputsError(f"cannot read manifest {p}: {exc}") from exc
        if not isinstance(obj, dict) or "config" not in obj:
            raise MissingOutputsError(f"{p} is not a run manifest")
        obj = {k: obj[k] for k in ("config", "seed", "version", "started", "finished", "outputs",
                                   "stages", "summary") if k in obj}
        obj.setdefault("seed", 0)
        obj.setdefault("version", "")
        return cls(**obj, path=str(p))

    @property
    def directory(self) -> Path:
        return Path(self.path).parent


def _stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def run_experiment(config, out_dir=None, seed: int | None = None) -> RunManifest:
    """Run one registered experiment and write CSV, JSON and ``manifest.json``.

    A failing stage is recorded in the manifest (outputs written so far are
    kept) and then re-raised as :class:`ExperimentError`.
    """
    cfg = load_config(config)
    if seed is not None:
        cfg["seed"] = int(seed)
    name = cfg["experiment"]
    out = Path(out_dir or cfg.get("output_dir") or f"runs/{name}-{cfg['seed']}")
    out.mkdir(parents=True, exist_ok=True)
    snapshot = {k: v for k, v in cfg.items() if k != "output_dir"}
    man = RunManifest(snapshot, cfg["seed"], __version__, started=_stamp(), path=str(out / "manifest.json"))
    failure = None
    try:
        tables, summary = EXPERIMENTS[name](cfg["params"], cfg["seed"])
        for t in tables:
            data = t.to_csv()
            (out / f"{t.name}.csv").write_bytes(data)
            digest = hashlib.sha256(data).hexdigest()
            man.outputs.append({"path": f"{t.name}.csv", "sha256": digest, "rows": len(t.rows)})
        man.summary = json.loads(json.dumps(summary, default=float))
        (out / "summary.json").write_text(json.dumps(man.summary, indent=1, sort_keys=True))
        man.stages.append({"name": name, "status": "ok"})
    except FbarLabError as exc:
        failure = exc
        man.stages.append({"name": name, "status": "error", "error": f"{type(exc).__name__}: {exc}"})
    except (ValueError, ArithmeticError) as exc:
        failure = exc
        man.stages.append({"name": name, "status": "error", "error": f"{type(exc).__name__}: {exc}"})
    man.finished = _stamp()
    Path(man.path).write_text(json.dumps(man.to_json(), indent=1, sort_keys=True))
    if isinstance(failure, ConfigError):
        raise failure
    if failure is not None:
        raise ExperimentError(f"experiment {name} failed: {failure}") from failure
    return man


def read_table(man: RunManifest, entry: dict) -> tuple[list, list]:
    path = man.directory / entry["path"]
    if not path.exists():
        raise MissingOutputsError(f"missing output {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def verify_checksums(man: RunManifest) -> list[str]:
    """Names of outputs whose bytes no longer match the manifest."""
    bad = []
    for e in man.outputs:
        path = man.directory / e["path"]
        if not path.exists() or hashlib.sha256(path.read_bytes()).hexdigest() != e["sha256"]:
            bad.append(e["path"])
    return bad


def emit_report(manifest) -> str:
    """Plain-text summary of a finished run."""
    man = manifest if isinstance(manifest, RunManifest) else RunManifest.load(manifest)
    if not man.outputs:
        raise MissingOutputsError("manifest lists no outputs")
    lines = [f"experiment {man.config.get('experiment')} seed {man.seed} version {man.version}"]
    for st in man.stages:
        lines.append(f"stage {st['name']}: {st['status']}" + (f" ({st['error']})" if "error" in st else ""))
    bad = verify_checksums(man)
    if bad:
        lines.append("checksum mismatch: " + ", ".join(bad))
    for e in man.outputs:
        header, rows = read_table(man, e)
        lines.append("")
        lines.append(f"[{e['path']}] {len(rows)} rows")
        widths = [max(len(h), *(len(_short(r[i])) for r in rows)) if rows else len(h)
                  for i, h in enumerate(header)]
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
        for r in rows:
            lines.append("  ".join(_short(x).ljust(w) for x, w in zip(r, widths)))
        if "ok" in header:
            i = header.index("ok")
            n_ok = sum(r[i] == "true" for r in rows)
            lines.append(f"OK {n_ok}/{len(rows)} rows within their certified bound")
    return "\n".join(lines)


def _short(x: str) -> str:
    try:
        v = float(x)
    except ValueError:
        return x
    if x.lstrip("-").isdigit():
        return x
    return f"{v:.5g}" if math.isfinite(v) else x
