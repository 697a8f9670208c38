"""Command-line experiment runner.

Every command reads the same INI config (``--config``), accepts a handful of
overrides, and writes CSV results whose first lines carry the toolkit version,
the config hash and the config itself.  Re-running a command with the same
config reproduces the data files byte for byte, whatever the worker count.

Exit codes: 0 success, 2 config error, 3 missing artifact, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import CurvePoint, peak, ssim_trace
from .attacks import PIA_NORM_POWER, AttackConfig, AttackRecord
from .config import ConfigError, ExperimentConfig, load_config
from .denoiser import UNCONDITIONAL, Condition, OracleDenoiser
from .diffusion import ddim_invert
from .distortions import ROTATION_FILL, DistortionSpec
from .errors import DomainError, FormatError, ParameterError, TrainingError
from .imagecore import Dataset, clamp_image, gen_shapes_dataset, read_dataset, save_image, write_dataset
from .metrics import SUMMARY_FIELDS, RocSummary, roc
from .runner import ScoreJob, labelled_samples, pool_map, score_dataset, split_scores
from .schedule import Schedule, linear_schedule
from .ssim import DEFAULT_PARAMS, ssim
from .svg import line_plot, roc_svgs

log = logging.getLogger("structmia")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4


class MissingArtifact(Exception):
    pass


# --------------------------------------------------------------------------- output helpers

def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def write_csv(path: Path, cfg: ExperimentConfig, fieldnames: list[str], rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in cfg.header_lines():
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([fmt(row[k]) for k in fieldnames])
    return path


def read_result_csv(path) -> list[dict]:
    """Read a result CSV written by this tool, skipping the ``#`` header lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path: Path, cfg: ExperimentConfig, payload: dict) -> Path:
    doc = {
        "toolkit": f"structmia {__version__}",
        "config_sha256": cfg.data_sha256(),
        "config": cfg.data_dict(),
        **payload,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def assumptions(cfg: ExperimentConfig) -> dict:
    return {
        "ssim": {"window": DEFAULT_PARAMS.window, "sigma": DEFAULT_PARAMS.sigma, "k1": DEFAULT_PARAMS.k1,
                 "k2": DEFAULT_PARAMS.k2, "data_range": DEFAULT_PARAMS.data_range,
                 "channels": "mean over RGB channels", "inputs": "clamped to [0, 1]"},
        "codec": "identity (pixel space)",
        "pia_norm_power": PIA_NORM_POWER,
        "rotation_fill": ROTATION_FILL,
        "distortions_applied_to": "member and holdout",
        "precision_recall_threshold": "asr_tau (member iff score > asr_tau)",
        "conditioning": "class label of each query" if cfg.attack.conditioning == "class" else "unconditional",
        "oracle_t0_substitute": 1,
    }


def summary_row(summary: RocSummary, **keys) -> dict:
    return {**keys, **summary.row()}


# --------------------------------------------------------------------------- shared setup

def make_schedule(cfg: ExperimentConfig) -> Schedule:
    s = cfg.schedule
    try:
        return linear_schedule(s.t_max, s.beta_start, s.beta_end)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def make_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.dataset
    if d.manifest:
        path = Path(d.manifest)
        if not path.exists():
            raise MissingArtifact(f"dataset manifest {path} not found")
        return read_dataset(path, seed=d.seed, k_classes=d.k_classes)
    try:
        return gen_shapes_dataset(d.n_member, d.n_holdout, d.size, d.k_classes, d.seed)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def make_model(cfg: ExperimentConfig, dataset: Dataset, schedule: Schedule):
    if cfg.model.backend == "oracle":
        return OracleDenoiser(dataset.member_images(), dataset.member_labels(), schedule, dataset.k_classes)
    from .network import load_model

    path = Path(cfg.model.path)
    if not path.exists():
        raise MissingArtifact(f"model file {path} not found; run `structmia train` first")
    return load_model(path)


def out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.run.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def evaluate(attack: str, model, schedule: Schedule, dataset: Dataset, cfg: ExperimentConfig,
             attack_cfg: AttackConfig, distortion: DistortionSpec | None = None,
             use_labels: bool | None = None) -> tuple[list[AttackRecord], RocSummary]:
    labels = cfg.attack.conditioning == "class" if use_labels is None else use_labels
    job = ScoreJob(attack, model, schedule, attack_cfg, labels, distortion)
    records = score_dataset(job, dataset, cfg.run.workers)
    m, h = split_scores(records)
    return records, roc(m, h)


# --------------------------------------------------------------------------- commands

def cmd_gen(cfg: ExperimentConfig) -> Path:
    dataset = make_dataset(cfg)
    target = out_dir(cfg) / "dataset"
    manifest = write_dataset(dataset, target)
    write_json(target / "dataset.json", cfg, {"dataset_sha256": dataset.fingerprint(),
                                              "n_member": len(dataset.members),
                                              "n_holdout": len(dataset.holdout)})
    log.info("wrote %s", manifest)
    return manifest


def cmd_train(cfg: ExperimentConfig) -> Path:
    from .network import save_model, train_denoiser

    dataset = make_dataset(cfg)
    schedule = make_schedule(cfg)
    m = cfg.model
    model, history = train_denoiser(
        dataset.member_images(), dataset.member_labels(), schedule, m.epochs, lr=m.lr, seed=m.seed,
        k_classes=dataset.k_classes, batch_size=m.batch_size, momentum=m.momentum, base_ch=m.base_ch,
        p_uncond=m.p_uncond, t_train_max=m.t_train_max, cosine=m.cosine,
    )
    path = Path(m.path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    write_csv(out_dir(cfg) / "train_loss.csv", cfg, ["epoch", "loss"],
              [{"epoch": i + 1, "loss": v} for i, v in enumerate(history)])
    log.info("saved model to %s", path)
    return path


def _dump_trajectories(cfg, dataset, model, schedule, attack_cfg, root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for split, s in labelled_samples(dataset):
        cond = Condition(s.label) if cfg.attack.conditioning == "class" else UNCONDITIONAL
        traj = ddim_invert(s.image, attack_cfg.t_total, attack_cfg.interval, model, schedule, cond,
                           attack_cfg.gamma)
        for t, state in traj.steps:
            img = clamp_image(state)
            save_image(img, root / f"{s.id:06d}_t{t:04d}.png")
            rows.append({"id": s.id, "t": t, "ssim": ssim(s.image, img)})
    write_csv(root / "trajectories.csv", cfg, ["id", "t", "ssim"], rows)


def cmd_attack(cfg: ExperimentConfig) -> Path:
    dataset = make_dataset(cfg)
    schedule = make_schedule(cfg)
    model = make_model(cfg, dataset, schedule)
    attack_cfg = cfg.attack.attack_config()
    out = out_dir(cfg)
    all_records, summaries, curves = [], [], {}
    for attack in cfg.attack.attack_list():
        records, summary = evaluate(attack, model, schedule, dataset, cfg, attack_cfg)
        all_records += records
        summaries.append(summary_row(summary, attack=attack, experiment="attack"))
        curves[attack] = summary.curve
        write_csv(out / f"roc_{attack}.csv", cfg, ["fpr", "tpr", "threshold"],
                  [{"fpr": f, "tpr": t, "threshold": th}
                   for (f, t), th in zip(summary.curve, summary.thresholds)])
    write_csv(out / "records.csv", cfg, ["id", "split", "attack", "score"],
              [{"id": r.id, "split": r.split, "attack": r.attack, "score": r.score} for r in all_records])
    summary_path = write_csv(out / "summary.csv", cfg, ["attack", "experiment", *SUMMARY_FIELDS], summaries)
    if cfg.run.svg:
        linear, logx = roc_svgs(curves, "ROC")
        (out / "roc.svg").write_text(linear)
        (out / "roc_log.svg").write_text(logx)
    if cfg.run.dump_trajectories:
        _dump_trajectories(cfg, dataset, model, schedule, attack_cfg, out / "trajectories")
    write_json(out / "attack_metadata.json", cfg, {
        "preset": cfg.run.preset,
        "t_total": attack_cfg.t_total, "interval": attack_cfg.interval, "gamma": attack_cfg.gamma,
        "query_steps": attack_cfg.n_queries, "baseline_t_eval": attack_cfg.t_eval,
        "dataset_sha256": dataset.fingerprint(), "backend": cfg.model.backend,
        "assumptions": assumptions(cfg),
    })
    return summary_path


def cmd_ablate_timestep(cfg: ExperimentConfig) -> Path:
    dataset = make_dataset(cfg)
    schedule = make_schedule(cfg)
    model = make_model(cfg, dataset, schedule)
    rows = []
    for t_total in cfg.sweep.timestep_list():
        acfg = cfg.attack.attack_config(t_total=t_total)
        _, summary = evaluate("structural", model, schedule, dataset, cfg, acfg)
        rows.append(summary_row(summary, t_total=t_total, interval=acfg.interval, queries=acfg.n_queries))
        log.info("T=%d auc=%.4f", t_total, summary.auc)
    return write_csv(out_dir(cfg) / "ablate_timestep.csv", cfg,
                     ["t_total", "interval", "queries", *SUMMARY_FIELDS], rows)


def cmd_ablate_interval(cfg: ExperimentConfig) -> Path:
    dataset = make_dataset(cfg)
    schedule = make_schedule(cfg)
    model = make_model(cfg, dataset, schedule)
    t_total = cfg.sweep.interval_t_total
    configs = [cfg.attack.attack_config(t_total=t_total, interval=i) for i in cfg.sweep.interval_list()]
    rows = []
    for acfg in configs:
        _, summary = evaluate("structural", model, schedule, dataset, cfg, acfg)
        rows.append(summary_row(summary, t_total=t_total, interval=acfg.interval, queries=acfg.n_queries))
        log.info("interval=%d auc=%.4f", acfg.interval, summary.auc)
    return write_csv(out_dir(cfg) / "ablate_interval.csv", cfg,
                     ["t_total", "interval", "queries", *SUMMARY_FIELDS], rows)


def robustness_specs(cfg: ExperimentConfig) -> list[DistortionSpec | None]:
    d = cfg.distortion
    try:
        return [None] + [DistortionSpec(k, getattr(d, k), d.seed) for k in d.kind_list()]
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_robustness(cfg: ExperimentConfig) -> Path:
    dataset = make_dataset(cfg)
    schedule = make_schedule(cfg)
    model = make_model(cfg, dataset, schedule)
    acfg = cfg.attack.attack_config()
    rows = []
    for attack in cfg.attack.attack_list():
        for spec in robustness_specs(cfg):
            _, summary = evaluate(attack, model, schedule, dataset, cfg, acfg, spec)
            rows.append(summary_row(
                summary, attack=attack,
                distortion="none" if spec is None else spec.kind,
                magnitude=0.0 if spec is None else spec.magnitude,
                distortion_seed=cfg.distortion.seed, attack_seed=acfg.seed,
            ))
            log.info("%s / %s auc=%.4f", attack, rows[-1]["distortion"], summary.auc)
    return write_csv(out_dir(cfg) / "robustness.csv", cfg,
                     ["attack", "distortion", "magnitude", "distortion_seed", "attack_seed", *SUMMARY_FIELDS],
                     rows)


def cmd_backward_compare(cfg: ExperimentConfig) -> Path:
    dataset = make_dataset(cfg)
    schedule = make_schedule(cfg)
    model = make_model(cfg, dataset, schedule)
    acfg = cfg.attack.attack_config()
    digest = dataset.fingerprint()
    rows = []
    for method, attack in (("forward", "structural"), ("backward", "reconstruction")):
        _, summary = evaluate(attack, model, schedule, dataset, cfg, acfg)
        rows.append(summary_row(summary, method=method, dataset_sha256=digest))
    return write_csv(out_dir(cfg) / "backward_compare.csv", cfg, ["method", "dataset_sha256", *SUMMARY_FIELDS],
                     rows)


class _TraceJob:
    def __init__(self, model, schedule, ts, use_labels, gamma):
        self.model, self.schedule, self.ts, self.use_labels, self.gamma = model, schedule, ts, use_labels, gamma

    def __call__(self, item):
        split, s = item
        cond = Condition(s.label) if self.use_labels else UNCONDITIONAL
        return split, ssim_trace(s.image, self.model, self.schedule, self.ts, cond, self.gamma)


def curves_from_traces(traces: list[tuple[str, dict]], grid: list[int], dt: int):
    def mean(split):
        ts = [tr for sp, tr in traces if sp == split]
        return {t: float(np.mean([tr[t] for tr in ts])) for t in ts[0]}

    m, h = mean("member"), mean("holdout")
    rate = {
        split: [CurvePoint(t, (means[t + dt] - means[t]) / dt) for t in grid]
        for split, means in (("member", m), ("holdout", h))
    }
    delta = [CurvePoint(t, m[t] - h[t]) for t in grid]
    return m, h, rate, delta


def cmd_curves(cfg: ExperimentConfig) -> Path:
    dataset = make_dataset(cfg)
    schedule = make_schedule(cfg)
    model = make_model(cfg, dataset, schedule)
    grid, dt = cfg.sweep.grid(), cfg.sweep.curve_dt
    if dt < 1 or any(t + dt > schedule.t_max for t in grid):
        raise ConfigError("curve grid needs dt >= 1 and t + dt <= t_max")
    ts = sorted(set(grid) | {t + dt for t in grid})
    job = _TraceJob(model, schedule, ts, cfg.attack.conditioning == "class", cfg.attack.gamma)
    traces = pool_map(job, labelled_samples(dataset), cfg.run.workers)
    m, h, rate, delta = curves_from_traces(traces, grid, dt)
    out = out_dir(cfg)
    for split in ("member", "holdout"):
        write_csv(out / f"decrease_rate_{split}.csv", cfg, ["t", "value"],
                  [{"t": p.t, "value": p.value} for p in rate[split]])
    write_csv(out / "delta_ssim.csv", cfg, ["t", "value"], [{"t": p.t, "value": p.value} for p in delta])
    write_csv(out / "mean_ssim.csv", cfg, ["t", "member", "holdout"],
              [{"t": t, "member": m[t], "holdout": h[t]} for t in ts])
    if cfg.run.svg:
        (out / "mean_ssim.svg").write_text(line_plot(
            {"member": [(t, m[t]) for t in ts], "holdout": [(t, h[t]) for t in ts]},
            "mean SSIM(x0, x_t)", "t", "SSIM"))
        (out / "delta_ssim.svg").write_text(line_plot(
            {"delta SSIM": [(p.t, p.value) for p in delta]}, "member - holdout SSIM", "t", "delta"))
    top = peak(delta)
    write_json(out / "curves_metadata.json", cfg, {
        "grid": grid, "dt": dt, "delta_ssim_peak_t": top.t, "delta_ssim_peak_value": top.value,
        "assumptions": assumptions(cfg),
    })
    return out / "delta_ssim.csv"


def cmd_guidance_sweep(cfg: ExperimentConfig) -> Path:
    dataset = make_dataset(cfg)
    schedule = make_schedule(cfg)
    model = make_model(cfg, dataset, schedule)
    rows = []
    for gamma in cfg.sweep.gamma_list():
        acfg = cfg.attack.attack_config(gamma=gamma)
        _, summary = evaluate("structural", model, schedule, dataset, cfg, acfg, use_labels=True)
        rows.append(summary_row(summary, gamma=gamma))
        log.info("gamma=%g auc=%.4f", gamma, summary.auc)
    out = out_dir(cfg)
    aucs = [r["auc"] for r in rows]
    write_json(out / "guidance_metadata.json", cfg, {
        "gammas": cfg.sweep.gamma_list(), "auc_spread": max(aucs) - min(aucs),
        "asr_spread": max(r["asr"] for r in rows) - min(r["asr"] for r in rows),
    })
    return write_csv(out / "guidance_sweep.csv", cfg, ["gamma", *SUMMARY_FIELDS], rows)


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "attack": cmd_attack,
    "ablate-timestep": cmd_ablate_timestep,
    "ablate-interval": cmd_ablate_interval,
    "robustness": cmd_robustness,
    "backward-compare": cmd_backward_compare,
    "curves": cmd_curves,
    "guidance-sweep": cmd_guidance_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="structmia", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"structmia {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI experiment config")
    parser.add_argument("--seed", type=int, help="override every seed (dataset, model, attack, distortion)")
    parser.add_argument("--workers", type=int, help="worker processes for per-image work")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config key (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        for key in ("dataset.seed", "model.seed", "attack.seed", "distortion.seed"):
            overrides[key] = str(args.seed)
    if args.workers is not None:
        overrides["run.workers"] = str(args.workers)
    if args.out is not None:
        overrides["run.out"] = args.out
    try:
        return load_config(args.config, overrides)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        import torch

        torch.set_num_threads(1)
    except ImportError:  # pragma: no cover
        pass
    try:
        cfg = config_from_args(args)
        result = COMMANDS[args.command](cfg)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifact, FileNotFoundError, FormatError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (TrainingError, DomainError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
