"""Command-line pipelines: ingest, synth, analyze, grid, experiment, features.

Each command reads an optional JSON config document; command-line flags
override config keys, which override defaults. Unknown config keys are
rejected. Every run writes its resolved configuration (with a content
hash) beside its outputs. Relative output paths are resolved under
$MORALSHIFT_OUTPUT_ROOT when that variable is set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path


from . import baseline, corpus, shift_analysis, synth
from .eval import APPROACHES, ExperimentReport, config_hash, run_comparison
from .l2af import TrainHyper

OUTPUT_ROOT_ENV = "MORALSHIFT_OUTPUT_ROOT"

_SCHEMAS: dict[str, dict] = {
    "ingest": {"input": None, "format": "jsonl", "out": "dataset.jsonl"},
    "synth": {
        "out": "corpus.jsonl",
        "seed": 0,
        "layout": "grouped",
        "domains": 5,
        "docs_per_domain": 2000,
        "vocab_size": 2000,
        "topics": 20,
        "topic_shift": 1.0,
        "label_shift": 1.0,
        "doc_length_min": 8,
        "doc_length_max": 25,
        "anchor_boost": 10.0,
    },
    "analyze": {
        "input": None,
        "format": "jsonl",
        "out": "analysis",
        "seed": 0,
        "topics": 20,
        "iterations": 1000,
        "with_grid": True,
        "emit_plots": False,
    },
    "grid": {
        "input": None,
        "format": "jsonl",
        "out": "grid",
        "seed": 0,
        "reg_strength": 1e-4,
        "max_features": baseline.MAX_FEATURES,
        "emit_plots": False,
    },
    "experiment": {
        "input": None,
        "format": "jsonl",
        "out": "experiment",
        "seed": 0,
        "target_domain": None,
        "approaches": list(APPROACHES),
        "alpha": 0.1,
        "epochs": 30,
        "batch_size": 16,
        "lr_weighting": 1e-4,
        "lr_prediction": 1e-4,
        "encoder": "bigru",
        "embedding_dim": 32,
        "hidden_dim": 32,
        "max_len": 60,
    },
    "features": {"input": None, "format": "jsonl", "out": "features.tsv", "domain": "", "top_n": 10},
}


def component_seed(seed: int, component: str) -> int:
    """Deterministic per-component expansion of the top-level seed."""
    digest = hashlib.sha256(f"{seed}:{component}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def _resolve_path(value: str) -> Path:
    path = Path(value)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _resolve_config(command: str, config_path: str | None, overrides: dict) -> dict:
    resolved = dict(_SCHEMAS[command])
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(resolved)
        if unknown:
            raise ValueError(f"unknown config keys for {command}: {sorted(unknown)}")
        resolved.update(loaded)
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    missing = [k for k, v in resolved.items() if v is None]
    if missing:
        raise ValueError(f"missing required settings for {command}: {missing}")
    return resolved


def _write_resolved_config(command: str, resolved: dict, beside: Path) -> Path:
    payload = {"command": command, "config_hash": config_hash(resolved), **resolved}
    path = beside.parent / f"{beside.stem}.config.json" if beside.suffix else beside / f"{command}.config.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    return path


def _load_input(resolved: dict) -> corpus.Dataset:
    return corpus.load_dataset(resolved["input"], format=resolved["format"])


def _print_summary(dataset: corpus.Dataset) -> None:
    summary = corpus.dataset_summary(dataset)
    label_names = dataset.scheme.labels
    header = f"{'domain':<12}{'docs':>8}{'tokens':>8}  " + " ".join(f"{n[:6]:>7}" for n in label_names)
    print(header)
    for domain, row in summary.items():
        pct = " ".join(f"{row['label_percent'][n]:>7.2f}" for n in label_names)
        print(f"{domain:<12}{row['documents']:>8}{row['mean_tokens']:>8.2f}  {pct}")


def cmd_ingest(resolved: dict) -> list[Path]:
    dataset = _load_input(resolved)
    if len(dataset) == 0:
        raise ValueError("no records survived ingestion")
    out = _resolve_path(resolved["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus.save_dataset(dataset, out)
    _print_summary(dataset)
    return [out]


def cmd_synth(resolved: dict) -> list[Path]:
    knobs = synth.ShiftKnob(resolved["topic_shift"], resolved["label_shift"])
    bench = synth.make_benchmark(
        n_domains=resolved["domains"],
        docs_per_domain=resolved["docs_per_domain"],
        vocab_size=resolved["vocab_size"],
        n_topics=resolved["topics"],
        knobs=knobs,
        layout=resolved["layout"],
        doc_length_range=(resolved["doc_length_min"], resolved["doc_length_max"]),
        seed=component_seed(resolved["seed"], "synth-spec"),
        anchor_boost=resolved["anchor_boost"],
    )
    dataset = bench.generate(component_seed(resolved["seed"], "synth-corpus"))
    out = _resolve_path(resolved["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus.save_dataset(dataset, out)
    for domain in dataset.domains:
        print(f"{domain}: {len(dataset.domain_documents(domain))} documents")
    return [out]


def cmd_analyze(resolved: dict) -> list[Path]:
    dataset = _load_input(resolved)
    out_dir = _resolve_path(resolved["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    model = shift_analysis.fit_lda(
        dataset,
        K=resolved["topics"],
        iterations=resolved["iterations"],
        seed=component_seed(resolved["seed"], "lda"),
    )
    topic_sim = shift_analysis.similarity_matrix(dataset, model, kind="topic")
    label_sim = shift_analysis.similarity_matrix(dataset, kind="label")
    label_sim_10 = shift_analysis.similarity_matrix(dataset, kind="label", label_dims=10)
    written = []
    for name, sim in (
        ("topic_similarity.csv", topic_sim),
        ("label_similarity.csv", label_sim),
        ("label_similarity_10dim.csv", label_sim_10),
    ):
        sim.to_csv(out_dir / name)
        written.append(out_dir / name)
    grid_values = None
    if resolved["with_grid"]:
        grid = baseline.cross_domain_grid(
            dataset, split_seed=component_seed(resolved["seed"], "grid-split")
        )
        grid.to_csv(out_dir / "grid.csv")
        written.append(out_dir / "grid.csv")
        grid_values = grid.values
    report = shift_analysis.run_shift_tests(topic_sim, label_sim, grid_values)
    report.to_json(out_dir / "shift_tests.json")
    written.append(out_dir / "shift_tests.json")
    if resolved["emit_plots"]:
        from ._plots import heatmap

        for name, sim in (("topic_similarity.png", topic_sim), ("label_similarity.png", label_sim)):
            heatmap(sim.values, sim.domains, f"{sim.kind} similarity", out_dir / name, 0.0, 1.0)
            written.append(out_dir / name)
    return written


def cmd_grid(resolved: dict) -> list[Path]:
    dataset = _load_input(resolved)
    out_dir = _resolve_path(resolved["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = baseline.cross_domain_grid(
        dataset,
        split_seed=component_seed(resolved["seed"], "grid-split"),
        reg_strength=resolved["reg_strength"],
        max_features=resolved["max_features"],
    )
    grid.to_csv(out_dir / "grid.csv")
    written = [out_dir / "grid.csv"]
    if resolved["emit_plots"]:
        from ._plots import heatmap

        heatmap(grid.values, grid.domains, "cross-domain F1", out_dir / "grid.png", 0.0, 1.0)
        written.append(out_dir / "grid.png")
    print(
        f"in-domain mean F1 {grid.diagonal_mean():.3f}, "
        f"out-domain mean F1 {grid.off_diagonal_mean():.3f}"
    )
    return written


def cmd_experiment(resolved: dict) -> list[Path]:
    dataset = _load_input(resolved)
    out_dir = _resolve_path(resolved["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    approaches = resolved["approaches"]
    if isinstance(approaches, str):
        approaches = [approaches]
    hyper = TrainHyper(
        alpha=resolved["alpha"],
        batch_size=resolved["batch_size"],
        epochs=resolved["epochs"],
        lr_weighting=resolved["lr_weighting"],
        lr_prediction=resolved["lr_prediction"],
        seed=component_seed(resolved["seed"], "train"),
    )
    report: ExperimentReport = run_comparison(
        dataset,
        resolved["target_domain"],
        approaches=tuple(approaches),
        split_seed=component_seed(resolved["seed"], "lodo-split"),
        hyper=hyper,
        embedding_dim=resolved["embedding_dim"],
        hidden_dim=resolved["hidden_dim"],
        max_len=resolved["max_len"],
        encoder_kind=resolved["encoder"],
    )
    json_path = out_dir / "report.json"
    report.to_json(json_path)
    md_path = out_dir / "report.md"
    md_path.write_text(report.to_markdown(), encoding="utf-8")
    print(report.to_markdown())
    return [json_path, md_path]


def cmd_features(resolved: dict) -> list[Path]:
    dataset = _load_input(resolved)
    out = _resolve_path(resolved["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    domains = [resolved["domain"]] if resolved["domain"] else list(dataset.domains)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("domain\trank\tfeature\n")
        for domain in domains:
            ranked = baseline.top_morality_features(dataset, domain, top_n=resolved["top_n"])
            for rank, feature in enumerate(ranked, start=1):
                fh.write(f"{domain}\t{rank}\t{feature}\n")
    return [out]


_COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "grid": cmd_grid,
    "experiment": cmd_experiment,
    "features": cmd_features,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moralshift", description="domain-shift analysis and adaptive morality classification"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in _COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="JSON config document")
        p.add_argument("--input", default=None)
        p.add_argument("--format", default=None, choices=["jsonl", "tsv"])
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        if command == "synth":
            p.add_argument("--topic-shift", dest="topic_shift", type=float, default=None)
            p.add_argument("--label-shift", dest="label_shift", type=float, default=None)
            p.add_argument("--layout", default=None, choices=["grouped", "disjoint"])
            p.add_argument("--domains", type=int, default=None)
            p.add_argument("--docs-per-domain", dest="docs_per_domain", type=int, default=None)
        if command == "analyze":
            p.add_argument("--topics", type=int, default=None)
            p.add_argument("--iterations", type=int, default=None)
            p.add_argument("--emit-plots", dest="emit_plots", action="store_const", const=True, default=None)
        if command == "grid":
            p.add_argument("--emit-plots", dest="emit_plots", action="store_const", const=True, default=None)
        if command == "experiment":
            p.add_argument("--target-domain", dest="target_domain", default=None)
            p.add_argument("--approach", dest="approaches", action="append", default=None, choices=list(APPROACHES))
            p.add_argument("--encoder", default=None)
            p.add_argument("--alpha", type=float, default=None)
            p.add_argument("--epochs", type=int, default=None)
        if command == "features":
            p.add_argument("--domain", default=None)
            p.add_argument("--top-n", dest="top_n", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    try:
        resolved = _resolve_config(command, config_path, args)
        written = _COMMANDS[command](resolved)
        primary = _resolve_path(resolved["out"])
        config_file = _write_resolved_config(command, resolved, primary)
        written.append(config_file)
        for path in written:
            print(f"wrote {path}")
        return 0
    except Exception as exc:  # single-line machine-parsable failure
        message = " ".join(str(exc).split())
        print(f"error: {command}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
