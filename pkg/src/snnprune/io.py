"""Checkpoints and CSV artifacts.

CSV files use a header row, comma delimiters, ``\\n`` line endings and
``repr`` float formatting so values round-trip exactly.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .lre import LreModel, LrePoint
from .prune import PruningPolicy
from .search import EpisodeResult, FinalReport
from .snn import Layer, LayerKind, LayerSpec, LifParams, SpikingNetwork
from .synops import SynOpsReport, param_count

# ---------------------------------------------------------------------------
# network checkpoint: b"SPNN" | version | arch | f32 LE weights

SPNN_VERSION = 1
_SPNN_HEAD = struct.Struct("<4sI5I")  # magic, version, T, C, H, W, n_layers
_SPNN_LAYER = struct.Struct("<7I3f")  # kind, c_in, c_out, k, s, pad, has_lif, v_th, tau, v_reset
_KINDS = [LayerKind.CONV2D, LayerKind.DENSE]


def save_network(path, net: SpikingNetwork) -> None:
    c, h, w = net.input_shape
    with open(path, "wb") as fh:
        fh.write(_SPNN_HEAD.pack(b"SPNN", SPNN_VERSION, net.timesteps, c, h, w, len(net.layers)))
        for layer in net.layers:
            s = layer.spec
            lif = layer.lif or LifParams()
            fh.write(
                _SPNN_LAYER.pack(
                    _KINDS.index(s.kind), s.c_in, s.c_out, s.kernel, s.stride, s.padding,
                    int(s.has_lif), lif.v_threshold, lif.tau, lif.v_reset,
                )
            )
        for layer in net.layers:
            fh.write(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())


def load_network(path) -> SpikingNetwork:
    raw = Path(path).read_bytes()
    magic, version, T, c, h, w, n_layers = _SPNN_HEAD.unpack_from(raw)
    if magic != b"SPNN":
        raise ContractViolation(f"{path}: not a network checkpoint")
    if version != SPNN_VERSION:
        raise ContractViolation(f"{path}: unsupported checkpoint version {version}")
    off = _SPNN_HEAD.size
    specs, lifs = [], []
    for _ in range(n_layers):
        kind, c_in, c_out, k, s, pad, has_lif, vth, tau, vr = _SPNN_LAYER.unpack_from(raw, off)
        off += _SPNN_LAYER.size
        specs.append(LayerSpec(_KINDS[kind], c_in, c_out, k, s, pad, bool(has_lif)))
        lifs.append(LifParams(vth, tau, vr) if has_lif else None)
    layers = []
    for spec, lif in zip(specs, lifs):
        n = int(np.prod(spec.weight_shape))
        wts = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(spec.weight_shape)
        off += 4 * n
        layers.append(Layer(spec, wts.astype(np.float32), lif))
    if off != len(raw):
        raise ContractViolation(f"{path}: {len(raw) - off} trailing bytes")
    return SpikingNetwork(layers, T, (c, h, w))


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise ContractViolation(f"expected true/false, got {s!r}")
    return s == "true"


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def read_csv(path, header: list[str]) -> list[dict]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != header:
            raise ContractViolation(f"{path}: expected columns {header}, found {rd.fieldnames}")
        return list(rd)


POLICY_HEADER = ["layer_index", "ratio"]


def write_policy(path, policy: PruningPolicy, layer_indices: list[int]) -> None:
    write_csv(path, POLICY_HEADER, zip(layer_indices, policy.ratios))


def read_policy(path) -> tuple[PruningPolicy, list[int]]:
    rows = read_csv(path, POLICY_HEADER)
    rows.sort(key=lambda r: int(r["layer_index"]))
    return PruningPolicy(tuple(float(r["ratio"]) for r in rows)), [int(r["layer_index"]) for r in rows]


LRE_HEADER = ["policy_id", "pre_synops", "post_synops"]


def write_lre_points(path, points: list[LrePoint]) -> None:
    write_csv(path, LRE_HEADER, [(p.policy_id, float(p.pre), float(p.post)) for p in points])


def read_lre_points(path) -> list[LrePoint]:
    return [
        LrePoint(int(r["policy_id"]), float(r["pre_synops"]), float(r["post_synops"]))
        for r in read_csv(path, LRE_HEADER)
    ]


def write_lre_model(path, model: LreModel) -> None:
    r2 = "none" if model.r2 is None else repr(float(model.r2))
    Path(path).write_text(f"w={model.w!r}\nb={model.b!r}\nmse={model.mse!r}\nr2={r2}\n")


def read_lre_model(path) -> LreModel:
    kv = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
    try:
        r2 = None if kv["r2"] == "none" else float(kv["r2"])
        return LreModel(float(kv["w"]), float(kv["b"]), float(kv["mse"]), r2)
    except KeyError as exc:
        raise ContractViolation(f"{path}: missing key {exc}") from None


SEARCH_LOG_HEADER = ["episode", "mode", "reward", "acc", "s_es_ratio", "p_ratio", "feasible", "sigma"]


def write_search_log(path, history: list[EpisodeResult], base_synops: float, base_params: int) -> None:
    write_csv(
        path,
        SEARCH_LOG_HEADER,
        [
            (i, r.mode, float(r.reward), float(r.acc), float(r.s_es / base_synops),
             float(r.p_cur / base_params), r.feasible, float(r.sigma))
            for i, r in enumerate(history)
        ],
    )


def read_search_log(path) -> list[dict]:
    rows = read_csv(path, SEARCH_LOG_HEADER)
    for r in rows:
        r["episode"] = int(r["episode"])
        r["feasible"] = _parse_bool(r["feasible"])
        for k in ("reward", "acc", "s_es_ratio", "p_ratio", "sigma"):
            r[k] = float(r[k])
    return rows


FINAL_HEADER = [f.name for f in fields(FinalReport)]


def write_final_report(path, report: FinalReport) -> None:
    d = asdict(report)
    d["synops_abs"] = float(d["synops_abs"])
    write_csv(path, FINAL_HEADER, [[d[k] for k in FINAL_HEADER]])


def read_final_report(path) -> FinalReport:
    (row,) = read_csv(path, FINAL_HEADER)
    return FinalReport(
        acc=float(row["acc"]),
        synops_abs=float(row["synops_abs"]),
        synops_ratio=float(row["synops_ratio"]),
        params_abs=int(row["params_abs"]),
        params_ratio=float(row["params_ratio"]),
        s_feasible=_parse_bool(row["s_feasible"]),
        p_feasible=_parse_bool(row["p_feasible"]),
    )


SYNOPS_HEADER = ["layer_index", "layer_kind", "synops_avg", "param_count"]


def write_synops_report(path, net: SpikingNetwork, report: SynOpsReport) -> None:
    rows = [
        (i, layer.spec.kind.value, float(report.per_layer[i]), layer.spec.params)
        for i, layer in enumerate(net.layers)
    ]
    rows.append(("TOTAL", "", float(report.total), param_count(net)))
    write_csv(path, SYNOPS_HEADER, rows)


CALIBRATION_HEADER = ["n_samples", "relative_error"]
