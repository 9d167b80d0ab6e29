"""Command-line entry point: one subcommand per workflow phase.

Exit codes: 0 success, 2 validation-gate fallback (verdict on stdout),
1 error or bad usage. Every invocation writes a RunManifest recording the
command line, config digests, seeds, input and output datasets with their
checksums, and the tool version, so any output can be replayed.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .anomaly import AnomalyConfig, ClusterModel, Window, categorize, detect, kmeans_fit, label_clusters, score_window
from .evaluation import ACCEPT, SplitSpec, compare_models, format_table, MetricsReport, scenario_split
from .features import FeatureMatrix, FeatureSet, build_matrix, profile_available
from .ingest import GeneratorConfig, generate_trace, parse_records, serialize_records
from .kb import DatasetMeta, FeedbackEntry, KBError, ModelRecord, kb_init, sha256_hex
from .models import COMPONENT_ORDER, TrainConfig, model_from_dict, model_to_dict
from .pipeline import EPOCH, PROFILES, choose_features, combine, train_one
from .preprocess import PreprocessConfig, preprocess
from .table import DataTable

PHASES = {
    "generate": "Phase 1, problem specification: synthesize a monitoring trace",
    "ingest": "Phase 2, data collection: load a JSON-lines trace into the knowledge base",
    "preprocess": "Phase 2, data cleaning: timestamps, static-field pruning, value and spike repair",
    "features": "Phase 3, feature engineering: correlation ranking, normalization, polynomial expansion",
    "train": "Phase 3, model training: LASSO, ElasticNet, random forest, gradient boosting",
    "combine": "Phase 3, model combination: grid search of convex blend weights",
    "evaluate": "Phase 3, validation: metrics, worst errors and the fallback gates",
    "anomaly": "Phase 4, runtime: fit the window categorizer or score windows for anomalies",
    "run-pcs": "Phase 4, deployment and runtime: run the proactive control scheme on a scenario",
    "report": "Knowledge base: tabulate stored model metrics",
}
MODEL_CHOICES = {"lasso": "lasso", "enet": "elasticnet", "forest": "forest", "gbt": "gbt"}
EXIT_OK, EXIT_ERROR, EXIT_FALLBACK = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; 2 is reserved for methodology fallbacks
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- run manifest ----------------------------------------------------------


def file_digest(path: str | Path) -> str:
    return sha256_hex(Path(path).read_bytes())


def dataset_id(digest: str) -> str:
    return f"ds-{digest[:16]}"


def _digest_tree(path: Path) -> dict[str, str]:
    if path.is_file():
        return {str(path): file_digest(path)}
    return {str(p): file_digest(p) for p in sorted(path.rglob("*")) if p.is_file() and "runs" not in p.relative_to(path).parts}


@dataclass
class RunManifest:
    command: list[str]
    subcommand: str
    tool_version: str = __version__
    seeds: dict[str, int] = field(default_factory=dict)
    config_digests: dict[str, str] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    input_datasets: list[str] = field(default_factory=list)
    output_datasets: list[str] = field(default_factory=list)
    exit_code: int = 0

    def add_input(self, path) -> str:
        for p, d in _digest_tree(Path(path)).items():
            self.inputs[p] = d
            self.input_datasets.append(dataset_id(d))
        return self.input_datasets[-1] if self.input_datasets else ""

    def add_output(self, path) -> None:
        for p, d in _digest_tree(Path(path)).items():
            self.outputs[p] = d
            self.output_datasets.append(dataset_id(d))

    def add_config(self, name: str, payload) -> None:
        text = payload if isinstance(payload, str) else json.dumps(payload, sort_keys=True, default=str)
        self.config_digests[name] = sha256_hex(text.encode())

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "subcommand": self.subcommand,
            "tool_version": self.tool_version,
            "seeds": self.seeds,
            "config_digests": self.config_digests,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "input_datasets": sorted(set(self.input_datasets)),
            "output_datasets": sorted(set(self.output_datasets)),
            "exit_code": self.exit_code,
        }

    def write(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def manifest_path(args, manifest: RunManifest) -> Path:
    """Explicit ``--manifest``, else ``runs/`` beside the primary output."""
    if args.manifest:
        return Path(args.manifest)
    tag = sha256_hex(json.dumps(manifest.command).encode())[:12]
    anchor = getattr(args, "_anchor", None)
    if anchor is None:
        base = Path("runs")
    else:
        anchor = Path(anchor)
        base = anchor / "runs" if anchor.is_dir() or not anchor.suffix else anchor.parent / "runs"
    return base / f"{args.command}-{tag}.json"


def replay(manifest_file: str | Path) -> dict[str, bool]:
    """Re-run a manifest's command and compare every recorded output checksum."""
    m = json.loads(Path(manifest_file).read_text())
    subprocess.run([sys.executable, "-m", "cogslice.cli", *m["command"]], check=False, capture_output=True)
    return {p: Path(p).is_file() and file_digest(p) == d for p, d in m["outputs"].items()}


# -- helpers ---------------------------------------------------------------


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise UsageError(f"missing input: {path}") from e


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"missing input: {path}")
    return p


def read_table(path) -> DataTable:
    """JSON-lines traces by extension (.jsonl/.json), CSV otherwise."""
    p = _need(path)
    text = p.read_text()
    return parse_records(text) if p.suffix in (".jsonl", ".json") else DataTable.from_csv(text)


def _write(path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    return p


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_features(d: Path) -> tuple[FeatureSet, FeatureMatrix, FeatureMatrix]:
    fs = FeatureSet.from_dict(_read_json(d / "feature_set.json"))
    tr = FeatureMatrix.from_csv(_need(d / "train.csv").read_text(), fs.target)
    va = FeatureMatrix.from_csv(_need(d / "validation.csv").read_text(), fs.target)
    return fs, tr, va


def _load_models(d: Path, kinds=None) -> dict:
    out = {}
    for name in kinds or (*COMPONENT_ORDER, "combined"):
        p = d / f"{name}.json"
        if p.is_file():
            out[name] = model_from_dict(_read_json(p))
    return out


def _train_config(args, man: RunManifest) -> TrainConfig:
    d = _read_json(args.config) if getattr(args, "config", None) else {}
    cfg = TrainConfig.from_dict({**d, "seed": args.seed})
    man.add_config("train", cfg.to_dict())
    return cfg


# -- subcommands -----------------------------------------------------------


def cmd_generate(args, man: RunManifest) -> int:
    d = _read_json(args.config) if args.config else {}
    cfg = GeneratorConfig.from_dict({**d, "seed": args.seed})
    man.add_config("generator", cfg.to_dict())
    raw, truth = generate_trace(cfg)
    out = _write(args.out, serialize_records(raw))
    man.add_output(out)
    if args.truth:
        man.add_output(_write(args.truth, truth.to_csv()))
    print(f"wrote {raw.row_count} rows to {out} ({dataset_id(file_digest(out))})")
    return EXIT_OK


def cmd_ingest(args, man: RunManifest) -> int:
    man.add_input(_need(args.trace))
    table = read_table(args.trace)
    kb = kb_init(args.kb)
    ds = args.id or dataset_id(file_digest(args.trace))
    kb.put_dataset(table, DatasetMeta(ds, "raw", args.scenario, created_at=EPOCH))
    man.output_datasets.append(ds)
    man.add_output(kb.dataset_path(ds))
    print(f"ingested {table.row_count} rows as {ds}")
    return EXIT_OK


def cmd_preprocess(args, man: RunManifest) -> int:
    man.add_input(_need(args.inp))
    d = _read_json(args.config) if args.config else {}
    cfg = PreprocessConfig(**{k: v for k, v in d.items() if k in ("target", "repair_spikes")})
    if args.no_spike_repair:
        cfg.repair_spikes = False
    man.add_config("preprocess", cfg.to_dict())
    table, removed, report = preprocess(read_table(args.inp), cfg)
    man.add_output(_write(args.out, table.to_csv()))
    if args.report:
        man.add_output(_write(args.report, _dump({**report.to_dict(), "removed_columns": removed})))
    print(f"{table.row_count} rows, {len(report.cells)} cells repaired, {len(removed)} static columns removed")
    return EXIT_OK


def cmd_features(args, man: RunManifest) -> int:
    man.add_input(_need(args.inp))
    spec = SplitSpec(train_fraction=args.ratio)
    man.add_config("split", {"mode": spec.mode, "ratio": args.ratio, "k": args.k, "method": args.method})
    table = read_table(args.inp)
    tr, va = scenario_split(table, spec)
    fs = choose_features(tr, args.target, args.k, args.method)
    out = Path(args.out)
    _write(out / "feature_set.json", _dump(fs.to_dict()))
    _write(out / "train.csv", build_matrix(tr, fs).to_csv(fs.target))
    _write(out / "validation.csv", build_matrix(va, fs).to_csv(fs.target))
    man.add_output(out)
    print(f"selected {len(fs.base_features)} base features: {', '.join(fs.base_features)}")
    print(f"train {tr.row_count} rows, validation {va.row_count} rows")
    return EXIT_OK


def cmd_train(args, man: RunManifest) -> int:
    fdir = _need(args.features)
    man.add_input(fdir)
    cfg = _train_config(args, man)
    fs, tr, va = _load_features(fdir)
    kinds = list(COMPONENT_ORDER) if args.model == "all" else [MODEL_CHOICES[args.model]]
    out = Path(args.out)
    for kind in kinds:
        model = train_one(kind, tr.X, tr.y, cfg, (va.X, va.y))
        man.add_output(_write(out / f"{kind}.json", _dump(model_to_dict(model, fs.id))))
        print(f"trained {kind}")
    man.add_output(_write(out / "source.json", _dump({"features": str(fdir)})))
    return EXIT_OK


def _features_dir(args) -> Path:
    if args.features:
        return _need(args.features)
    src = Path(args.models) / "source.json"
    if not src.is_file():
        raise UsageError("--features is required when the models directory has no source.json")
    return _need(_read_json(src)["features"])


def cmd_combine(args, man: RunManifest) -> int:
    mdir = _need(args.models)
    fdir = _features_dir(args)
    man.add_input(fdir)
    models = _load_models(mdir, COMPONENT_ORDER)
    for k in COMPONENT_ORDER:
        man.add_input(mdir / f"{k}.json") if k in models else None
    missing = [k for k in COMPONENT_ORDER if k not in models]
    if missing:
        raise UsageError(f"combine needs all four models; missing {', '.join(missing)}")
    man.add_config("combine", {"step": args.step})
    fs, _, va = _load_features(fdir)
    cm, res = combine(models, va.X, va.y, args.step)
    man.add_output(_write(mdir / "combined.json", _dump(model_to_dict(cm, fs.id))))
    w = dict(zip(COMPONENT_ORDER, map(float, res.weights)))
    man.add_output(_write(mdir / "weights.json", _dump({"step": args.step, "weights": w, "accuracy": res.accuracy, "rmse": res.rmse})))
    print("weights: " + ", ".join(f"{k}={v:.2f}" for k, v in w.items()))
    return EXIT_OK


def cmd_evaluate(args, man: RunManifest) -> int:
    mdir = _need(args.models)
    models = _load_models(mdir)
    if not models:
        raise UsageError(f"no model artifacts in {mdir}")
    for name in models:
        man.add_input(mdir / f"{name}.json")
    fdir = _features_dir(args)
    fs = FeatureSet.from_dict(_read_json(fdir / "feature_set.json"))
    if args.inp:
        # rebuild the validation side from a processed table with the given split
        man.add_input(_need(args.inp))
        table = read_table(args.inp)
        _, va_t = scenario_split(table, SplitSpec(train_fraction=args.ratio))
        va = build_matrix(va_t, fs)
        fields = table.names
    else:
        man.add_input(fdir)
        _, _, va = _load_features(fdir)
        fields = list(fs.base_features)
    man.add_config("evaluate", {"split": args.split, "ratio": args.ratio, "profile": args.profile})
    available = profile_available(fields, PROFILES[args.profile]) if args.profile else None
    preds = {k: m.predict(va.X) for k, m in models.items()}
    comp = compare_models(preds, va.y, fs, available)
    print(comp.table())
    out = Path(args.out) if args.out else mdir / "comparison.json"
    man.add_output(_write(out, comp.to_json() + "\n"))
    if args.kb:
        kb = kb_init(args.kb)
        for name, model in models.items():
            rec = ModelRecord(args.prefix + name, name, fs.id, "", comp.reports[name].to_dict())
            kb.register_model(rec, model_to_dict(model, fs.id), replace=True)
        man.add_output(Path(args.kb))
    print(f"verdict: {comp.verdict}")
    for r in comp.reasons:
        print(f"  {r}")
    return EXIT_OK if comp.verdict == ACCEPT else EXIT_FALLBACK


def read_windows(path) -> tuple[list[Window], list[str | None]]:
    """JSON-lines of {"start", "end", "summary", optional "label"}."""
    wins, labels = [], []
    for line in _need(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            wins.append(Window(int(d["start"]), int(d["end"]), tuple(float(v) for v in d["summary"])))
            labels.append(d.get("label") or d.get("class"))
    return wins, labels


def _parse_fit(spec: str) -> int:
    key, _, val = spec.partition("=")
    if key != "k" or not val.isdigit() or int(val) < 1:
        raise UsageError(f"--fit expects k=<positive int>, got {spec!r}")
    return int(val)


def cmd_anomaly(args, man: RunManifest) -> int:
    wins, labels = read_windows(args.windows)
    man.add_input(args.windows)
    if not wins:
        raise UsageError("no windows to process")
    if args.fit:
        if args.seed is None:
            raise UsageError("--seed is required with --fit")
        k = _parse_fit(args.fit)
        man.seeds["kmeans"] = args.seed
        man.add_config("fit", {"k": k, "standardize": True})
        points = np.array([w.summary for w in wins])
        cm = kmeans_fit(points, k, args.seed, standardize=True)
        named = [(p, n) for p, n in zip(points, labels) if n]
        if named:
            rec = dict(kv.split("=", 1) for kv in args.recommend)
            cm = label_clusters(cm, np.array([p for p, _ in named]), [n for _, n in named], rec)
        man.add_output(_write(args.out, _dump(cm.to_dict())))
        print(f"k={k} inertia={cm.inertia:.6g} radius={cm.radius:.6g}")
        return EXIT_OK
    cfg = AnomalyConfig(threshold=args.threshold, min_history=args.min_history)
    man.add_config("score", vars(cfg))
    cm = None
    if args.cluster:
        man.add_input(_need(args.cluster))
        cm = ClusterModel.from_dict(_read_json(args.cluster))
    history, rows, feedback = [], [], []
    for w in wins:
        score = score_window(history, w, cfg)
        hit = detect(score)
        row = {"start": w.start_tick, "end": w.end_tick, "score": None if score is None else score.value, "detected": hit}
        if hit:
            cls = categorize(cm, w).name if cm is not None and cm.labels is not None else None
            row["class"] = cls
            feedback.append(FeedbackEntry(w.end_tick, w.summary[1], w.summary[0], f"detection:{cls or 'anomaly'}"))
            print(f"window [{w.start_tick}, {w.end_tick}) score {score.value:.2f}" + (f" class {cls}" if cls else ""))
        else:
            history.append(w)
        rows.append(row)
    if args.out:
        man.add_output(_write(args.out, "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)))
    if args.kb and feedback:
        kb_init(args.kb).append_feedback(feedback)
        man.add_output(Path(args.kb) / "feedback.jsonl")
    print(f"{len(feedback)} of {len(wins)} windows detected")
    return EXIT_OK


def cmd_run_pcs(args, man: RunManifest) -> int:
    from .pcs import EnvConfig, LoopConfig, load_script, run_loop, sla_audit
    from .pcs.training import build_deployment, load_deployed, register_deployed

    env_cfg = EnvConfig.from_dict(_read_json(args.env)) if args.env else EnvConfig()
    loop_d = _read_json(args.loop) if args.loop else {}
    loop_cfg = LoopConfig.from_dict({**loop_d, "controller": args.controller})
    script = load_script(args.scenario)
    for p in (args.env, args.loop):
        if p:
            man.add_input(p)
    if Path(args.scenario).is_file():
        man.add_input(args.scenario)
    man.seeds["env"] = args.seed
    man.add_config("env", env_cfg.to_dict())
    man.add_config("loop", repr(loop_cfg))
    man.add_config("scenario", script.to_dict())
    models, cluster, model_id = {}, None, None
    kb = kb_init(args.kb) if args.kb else None
    if args.controller == "proactive":
        model_id = args.model
        cluster_file = Path(args.kb) / "cluster.json" if kb is not None else None
        if kb is not None and kb.has_model(model_id) and cluster_file.is_file():
            models = {r.id: load_deployed(kb, r.id) for r in kb.models if r.model_kind != "combined" and "feature_set" in kb.load_model_artifact(r.id)}
            cluster = ClusterModel.from_dict(_read_json(cluster_file))
        else:
            dep = build_deployment(env_cfg, loop_cfg)
            models, cluster = dep.models, dep.cluster
            model_id = args.model if args.model in models else dep.model_id
            if kb is not None:
                for dm in models.values():
                    register_deployed(kb, dm, "lasso")
                _write(cluster_file, _dump(cluster.to_dict()))
                man.add_output(cluster_file)
    res = run_loop(env_cfg, loop_cfg, script, args.ticks, args.seed, models, model_id, kb, cluster)
    out = Path(args.out)
    audit = sla_audit(res.ledger, env_cfg.specs)
    ledger = {**res.ledger.to_dict(), "sla": {k: vars(v) for k, v in audit.items()}, "final_model": res.final_model}
    _write(out / "ledger.json", _dump(ledger))
    _write(out / "events.jsonl", "".join(json.dumps(e, sort_keys=True, default=str) + "\n" for e in res.events))
    _write(out / "windows.jsonl", "".join(json.dumps(w, sort_keys=True) + "\n" for w in res.windows))
    _write(out / "feedback.jsonl", "".join(json.dumps(vars(f), sort_keys=True) + "\n" for f in res.feedback))
    man.add_output(out)
    if kb is not None:
        man.add_output(Path(args.kb) / "feedback.jsonl")
    for sid, v in audit.items():
        print(f"{sid}: {v.violation_ticks}/{v.total_ticks} violation ticks, penalty {v.penalty:g}, {'met' if v.met else 'violated'}")
    print(f"detections: {len(res.detections)}; final model: {res.final_model}")
    return EXIT_OK


def cmd_report(args, man: RunManifest) -> int:
    kb = kb_init(_need(args.kb))
    reports = {r.id: MetricsReport.from_dict(r.metrics) for r in kb.models if r.metrics}
    if not reports:
        print("no evaluated models in the knowledge base")
        return EXIT_OK
    print(format_table(reports))
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    epilog = "\n".join(f"  {k:<11} {v}" for k, v in PHASES.items())
    p = _Parser(prog="cogslice", description=__doc__.split("\n\n")[0], epilog="workflow phases:\n" + epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"cogslice {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, fn, anchor=None):
        s = sub.add_parser(name, help=PHASES[name], description=PHASES[name])
        s.add_argument("--manifest", help="where to write the run manifest (default: runs/ beside the output)")
        s.set_defaults(func=fn, anchor_arg=anchor)
        return s

    s = cmd("generate", cmd_generate, "out")
    s.add_argument("--config", help="generator config JSON")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="JSON-lines trace to write")
    s.add_argument("--truth", help="optional CSV with the uncorrupted target")

    s = cmd("ingest", cmd_ingest, "kb")
    s.add_argument("--trace", required=True, help="JSON-lines trace")
    s.add_argument("--kb", required=True)
    s.add_argument("--id", help="dataset id (default: content digest)")
    s.add_argument("--scenario", default="all")

    s = cmd("preprocess", cmd_preprocess, "out")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True, help="repaired CSV")
    s.add_argument("--report", help="repair report JSON")
    s.add_argument("--config", help="preprocess config JSON (target, repair_spikes)")
    s.add_argument("--no-spike-repair", action="store_true")

    s = cmd("features", cmd_features, "out")
    s.add_argument("--in", dest="inp", required=True, help="processed CSV")
    s.add_argument("--out", required=True, help="directory for feature_set.json, train.csv, validation.csv")
    s.add_argument("--k", type=int, default=15)
    s.add_argument("--method", choices=("pearson", "spearman"), default="pearson")
    s.add_argument("--target", default="wb_cqi")
    s.add_argument("--split", choices=("scenario",), default="scenario")
    s.add_argument("--ratio", type=float, default=0.9)

    s = cmd("train", cmd_train, "out")
    s.add_argument("--features", required=True)
    s.add_argument("--model", choices=(*MODEL_CHOICES, "all"), required=True)
    s.add_argument("--out", required=True, help="models directory")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--config", help="training config JSON")

    s = cmd("combine", cmd_combine, "models")
    s.add_argument("--models", required=True)
    s.add_argument("--features")
    s.add_argument("--step", type=int, default=1, help="weight grid step in percent")

    s = cmd("evaluate", cmd_evaluate, "models")
    s.add_argument("--models", required=True)
    s.add_argument("--features")
    s.add_argument("--in", dest="inp", help="processed CSV to split afresh")
    s.add_argument("--split", choices=("scenario",), default="scenario")
    s.add_argument("--ratio", type=float, default=0.9)
    s.add_argument("--profile", choices=sorted(PROFILES), help="deployment profile for the availability gate")
    s.add_argument("--out", help="comparison JSON (default: <models>/comparison.json)")
    s.add_argument("--kb", help="register evaluated models here")
    s.add_argument("--prefix", default="", help="model id prefix in the knowledge base")

    s = cmd("anomaly", cmd_anomaly, "out")
    mode = s.add_mutually_exclusive_group(required=True)
    mode.add_argument("--fit", metavar="k=N")
    mode.add_argument("--score", action="store_true")
    s.add_argument("--windows", required=True, help="window summaries, JSON-lines")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="cluster JSON (fit) or scored windows JSON-lines (score)")
    s.add_argument("--recommend", nargs="*", default=[], metavar="CLASS=MODEL")
    s.add_argument("--threshold", type=float, default=3.0)
    s.add_argument("--min-history", type=int, default=10)
    s.add_argument("--cluster", help="cluster JSON used to categorize detections")
    s.add_argument("--kb", help="append detections to this knowledge base's feedback log")

    s = cmd("run-pcs", cmd_run_pcs, "out")
    s.add_argument("--env", help="environment config JSON (default: built-in three-cell plant)")
    s.add_argument("--scenario", required=True, help="scenario JSON or bundled name")
    s.add_argument("--loop", help="loop config JSON")
    s.add_argument("--model", default="lasso-normal")
    s.add_argument("--ticks", type=int)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--controller", choices=("proactive", "reactive"), default="proactive")
    s.add_argument("--kb", help="knowledge base holding (or receiving) deployed models")
    s.add_argument("--out", required=True, help="directory for ledger, events, windows, feedback")

    s = cmd("report", cmd_report, "kb")
    s.add_argument("--kb", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_ERROR
    man = RunManifest(argv, args.command)
    if getattr(args, "seed", None) is not None:
        man.seeds.setdefault("seed", args.seed)
    args._anchor = getattr(args, args.anchor_arg) if args.anchor_arg else None
    try:
        code = args.func(args, man)
    except UsageError as e:
        print(f"cogslice {args.command}: {e}", file=sys.stderr)
        code = EXIT_ERROR
    except (KBError, KeyError, ValueError, OSError) as e:
        print(f"cogslice {args.command}: error: {e}", file=sys.stderr)
        code = EXIT_ERROR
    man.exit_code = code
    man.write(manifest_path(args, man))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
