"""Command-line interface.

Verbs:
  train      run a config file end to end (checkpoints, JSONL log, figures)
  eval       score a checkpoint on a PNG corpus (CSV, figures, residual maps)
  verify     run the brute-force verifier suites
  roundtrip  push PNGs through a checkpoint and back
  make-corpus  synthesize a deterministic PNG corpus

Exit codes: 0 success, 1 verification failure, 2 usage/config error,
3 training abort (non-finite loss).
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import tensor as T
from .config import OUT_ENV, load_run_config
from .corpus import load_corpus, load_png, save_png, write_corpus
from .errors import NonFiniteLossError, WicnetError
from .io import load_checkpoint, save_checkpoint
from .metrics import psnr, ssim
from .networks import build_win, build_win_naive, net_forward, net_reverse
from .tasks import TaskSpec, pack_sample, quantize8
from . import training
from .training import evaluate_task, train

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2
EXIT_ABORT = 3

VERIFY_SUITES = ("theorem1", "theorem2", "case2", "grad", "ablation", "all")


def _build_net(cfg):
    builder = build_win if cfg.arch == "win" else build_win_naive
    return builder(cfg.net)


def _task_from_meta(meta):
    fields = meta.get("task", {})
    return TaskSpec(**fields)


def cmd_train(args):
    cfg = load_run_config(args.config)
    corpus = load_corpus(cfg.corpus)
    net = _build_net(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    log_path = os.path.join(cfg.out_dir, "train_log.jsonl")
    ckpt_path = os.path.join(cfg.out_dir, "checkpoint.wcp1")
    meta = {
        "task": dataclasses.asdict(cfg.task),
        "arch": cfg.arch,
        "config": cfg.resolved,
        "config_hash": cfg.hash,
    }

    log_fh = open(log_path, "w")

    def sink(record):
        log_fh.write(json.dumps(record, sort_keys=True) + "\n")
        log_fh.flush()

    def checkpoint(step, network):
        save_checkpoint(ckpt_path, network, meta={**meta, "step": step})

    try:
        result = train(net, corpus, cfg.task, cfg.train, weights=cfg.loss,
                       on_checkpoint=checkpoint, log_sink=sink)
    except NonFiniteLossError as exc:
        log_fh.close()
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    finally:
        if not log_fh.closed:
            log_fh.close()

    if not cfg.train.checkpoint_every:
        checkpoint(cfg.train.steps, net)
    final = evaluate_task(net, corpus, cfg.task, dtype=cfg.train.dtype)
    summary = {
        "config": cfg.resolved,
        "config_hash": cfg.hash,
        "steps_run": result["steps_run"],
        "cpu_seconds": result["cpu_seconds"],
        "final": final,
    }
    with open(os.path.join(cfg.out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)

    from . import report
    if result["log"]:
        report.plot_training_curves(
            result["log"], os.path.join(cfg.out_dir, "loss_curves.png"))
        report.plot_eval_curves(
            result["log"], os.path.join(cfg.out_dir, "eval_curves.png"))
    print(f"trained {result['steps_run']} steps in "
          f"{result['cpu_seconds']:.1f} cpu-s; "
          f"embedding {final['forward_psnr']:.2f} dB, "
          f"recovery {final['recovery_psnr']:.2f} dB")
    print(f"artifacts in {cfg.out_dir}")
    return EXIT_OK


def _image_rows(collected):
    rows = []
    for entry in collected:
        rows.append({
            "index": entry["index"],
            "forward_psnr": psnr(entry["embedding"], entry["target"]),
            "forward_ssim": ssim(entry["embedding"], entry["target"]),
            "recovery_psnr": psnr(entry["recovered"], entry["reference"]),
            "recovery_ssim": ssim(entry["recovered"], entry["reference"]),
        })
    return rows


def _save_channel_groups(out_dir, stem, tensor4):
    """Write (1, 3k, h, w) data as k RGB files (or one grayscale file)."""
    from . import report
    a = np.asarray(tensor4)[0]
    paths = []
    if a.shape[0] % 3:
        groups = [a]
    else:
        groups = [a[i:i + 3] for i in range(0, a.shape[0], 3)]
    for i, g in enumerate(groups):
        suffix = f"_{i}" if len(groups) > 1 else ""
        p = os.path.join(out_dir, f"{stem}{suffix}.png")
        report.save_image(p, g)
        paths.append(p)
    return paths


def cmd_eval(args):
    net, meta = load_checkpoint(args.checkpoint)
    task = _task_from_meta(meta)
    corpus = load_corpus(args.corpus)
    out_dir = args.out or os.environ.get(OUT_ENV) or "."
    os.makedirs(out_dir, exist_ok=True)
    from .io import _net_dtype
    dtype = _net_dtype(net)

    collected = []
    aggregate = evaluate_task(net, corpus, task, dtype=dtype,
                              quantized=not args.no_quantize,
                              collect=collected)
    rows = _image_rows(collected)

    from . import report
    csv_path = os.path.join(out_dir, "metrics.csv")
    report.write_metrics_csv(csv_path, rows, aggregate={
        k: aggregate[k] for k in ("forward_psnr", "forward_ssim",
                                  "recovery_psnr", "recovery_ssim")})
    report.plot_per_image_metrics(rows, os.path.join(out_dir, "metrics.png"))
    if args.residuals:
        for entry in collected:
            i = entry["index"]
            report.save_residual_map(
                os.path.join(out_dir, f"residual_embed_{i:04d}.png"),
                entry["embedding"], entry["target"])
            rec, ref = entry["recovered"], entry["reference"]
            for g in range(max(rec.shape[1] // 3, 1)):
                sl = slice(3 * g, 3 * g + 3) if rec.shape[1] % 3 == 0 \
                    else slice(None)
                suffix = f"_{g}" if rec.shape[1] > 3 else ""
                report.save_residual_map(
                    os.path.join(out_dir,
                                 f"residual_recover_{i:04d}{suffix}.png"),
                    rec[:, sl], ref[:, sl])
    print(f"{aggregate['n']} samples: "
          f"embedding {aggregate['forward_psnr']:.2f} dB / "
          f"ssim {aggregate['forward_ssim']:.4f}, "
          f"recovery {aggregate['recovery_psnr']:.2f} dB / "
          f"ssim {aggregate['recovery_ssim']:.4f}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_verify(args):
    from . import oracles
    reports = []
    seed = args.seed
    if args.suite in ("theorem1", "all"):
        reports.append(oracles.theorem1_oracle(
            trials=args.trials or 10_000, seed=seed, dump_dir=args.dump_dir))
    if args.suite in ("theorem2", "all"):
        n = args.trials or 1000
        reports.append(oracles.independence_oracle(
            trials=n, seed=seed, dump_dir=args.dump_dir))
        reports.append(oracles.independence_oracle(
            trials=n, seed=seed + 1, variant="copy"))
        reports.append(oracles.independence_oracle(
            trials=n, seed=seed + 2, variant="linear"))
    if args.suite in ("case2", "all"):
        reports.append(oracles.case2_suite(
            n_layers=args.trials or 1000, seed=seed, dump_dir=args.dump_dir))
    if args.suite in ("grad", "all"):
        reports.extend(oracles.gradient_suite(seed=seed))

    ablation_report = None
    if args.suite in ("ablation", "all"):
        cfg = oracles.AblationConfig()
        if args.steps:
            cfg = dataclasses.replace(cfg, steps=args.steps)
        ablation_report = oracles.ablation_trend(
            cfg, seed=seed, log_sink=lambda m: print(m, file=sys.stderr))

    ok = all(r.passed for r in reports)
    for r in reports:
        print(r.summary())
    if ablation_report is not None:
        print(json.dumps(ablation_report, indent=2, sort_keys=True))
        ok = ok and ablation_report["passed"]
    if args.json_out:
        payload = [json.loads(r.to_json()) for r in reports]
        if ablation_report is not None:
            payload.append(ablation_report)
        with open(args.json_out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    return EXIT_OK if ok else EXIT_VERIFY_FAIL


def cmd_roundtrip(args):
    net, meta = load_checkpoint(args.checkpoint)
    task = _task_from_meta(meta)
    if len(args.images) != task.images_per_sample:
        print(f"task {task.kind!r} needs {task.images_per_sample} image(s), "
              f"got {len(args.images)}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = args.out or os.environ.get(OUT_ENV) or "."
    os.makedirs(out_dir, exist_ok=True)
    images = [load_png(p) for p in args.images]
    net.to_dtype("f64")

    x, target = pack_sample(task, images)
    x = T.constant(x.numpy())
    y, _ = net_forward(net, x, want_aux=False)
    if task.kind == "hide" and task.squeeze:
        y_img = T.pixel_shuffle(y, task.squeeze).numpy()
        t_img = T.pixel_shuffle(target, task.squeeze).numpy()
    else:
        y_img = y.numpy()
        t_img = target.numpy()
    emb_paths = _save_channel_groups(out_dir, "embedding", y_img)

    y_stored = y_img if args.no_quantize else quantize8(y_img)
    if task.kind == "hide" and task.squeeze:
        y_back = T.pixel_unshuffle(T.constant(y_stored), task.squeeze)
    else:
        y_back = T.constant(y_stored)
    back = net_reverse(net, y_back)

    if task.kind == "hide":
        if task.squeeze:
            back = T.pixel_shuffle(back, task.squeeze)
            x_ref = T.pixel_shuffle(x, task.squeeze)
        else:
            x_ref = x
        got, want = back.numpy()[:, 3:], x_ref.numpy()[:, 3:]
        rec_paths = _save_channel_groups(out_dir, "recovered_secret", got)
    elif task.kind == "rescale":
        got = T.pixel_shuffle(back, task.s).numpy()
        want = T.pixel_shuffle(x, task.s).numpy()
        rec_paths = _save_channel_groups(out_dir, "reconstructed", got)
    else:
        got, want = back.numpy(), x.numpy()
        rec_paths = _save_channel_groups(out_dir, "recolorized", got)

    print(f"embedding PSNR {psnr(y_img, t_img):.2f} dB, "
          f"recovery PSNR {psnr(got, want):.2f} dB")
    print("wrote " + ", ".join(emb_paths + rec_paths))
    return EXIT_OK


def cmd_make_corpus(args):
    paths = write_corpus(args.out, args.n, args.size, seed=args.seed)
    print(f"wrote {len(paths)} images to {args.out}")
    return EXIT_OK


def _parser():
    p = argparse.ArgumentParser(
        prog="wicnet",
        description="invertible image conversion: train, evaluate, verify")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a key-value config file")
    t.add_argument("--config", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a PNG corpus")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--out", default=None)
    e.add_argument("--residuals", action="store_true",
                   help="write x20-amplified residual PNGs")
    e.add_argument("--no-quantize", action="store_true",
                   help="skip 8-bit snapping of the embedding before reverse")
    e.set_defaults(fn=cmd_eval)

    v = sub.add_parser("verify", help="run brute-force verifier suites")
    v.add_argument("suite", choices=VERIFY_SUITES)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=0,
                   help="override the default trial count")
    v.add_argument("--steps", type=int, default=0,
                   help="ablation: steps per variant")
    v.add_argument("--dump-dir", default=None,
                   help="directory for failing-instance tensor dumps")
    v.add_argument("--json-out", default=None)
    v.set_defaults(fn=cmd_verify)

    r = sub.add_parser("roundtrip", help="PNG in, embedding + recovery out")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--no-quantize", action="store_true")
    r.add_argument("images", nargs="+")
    r.set_defaults(fn=cmd_roundtrip)

    m = sub.add_parser("make-corpus", help="synthesize a PNG corpus")
    m.add_argument("--out", required=True)
    m.add_argument("--n", type=int, default=16)
    m.add_argument("--size", type=int, default=64)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(fn=cmd_make_corpus)
    return p


def main(argv=None):
    import torch
    torch.set_num_threads(1)   # every command is reproducible bit for bit
    training.tune_heap()
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except WicnetError as exc:
        key = getattr(exc, "key", None)
        where = f" (key: {key})" if key else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
