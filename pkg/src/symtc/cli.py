"""Command-line entry point: synthesize, augment, train, evaluate and audit."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import LUMBAR_OBJECTS, ConfigError, NetworkConfig, RunConfig
from .ndgrad import Rng

log = logging.getLogger("symtc")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(2)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def class_names(class_count: int) -> list[str]:
    """Foreground column names in label order."""
    if class_count == 12:
        return list(LUMBAR_OBJECTS)
    if class_count == 3:
        return ["Vertebra", "Disc"]
    return [f"C{i}" for i in range(1, class_count)]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_sample(root: Path, stem: str, image, mask, shape=None) -> io.SampleRecord:
    rec = io.SampleRecord(f"images/{stem}.pgm", f"masks/{stem}.pgm")
    io.save_image(root / rec.image, image)
    io.save_mask(root / rec.mask, mask)
    if shape is not None:
        rec.shape = f"shapes/{stem}.json"
        io.save_shape(root / rec.shape, shape)
    return rec


# -- commands ----------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    from .gradsuite import SUITES, TOLERANCES
    names = args.suite or list(SUITES)
    failed = False
    for name in names:
        t0 = time.time()
        res = SUITES[name](args.seed)
        worst = max(res, key=res.get)
        ok = res[worst] <= TOLERANCES[name]
        failed |= not ok
        print(f"{name:8s} worst={res[worst]:.3e} ({worst}) tol={TOLERANCES[name]:.0e} "
              f"{'PASS' if ok else 'FAIL'} [{len(res)} checks, {time.time() - t0:.1f}s]")
    return 1 if failed else 0


def cmd_phantom(args) -> int:
    from .shapes.phantom import phantom_sample
    out = Path(args.out)
    size = (args.size, args.size)
    recs = []
    for i in range(args.count):
        img, mask, shape = phantom_sample(size, seed=args.seed * 100003 + i, three_class=args.three_class)
        rec = _write_sample(out, f"phantom_{i:04d}", img, mask, shape)
        rec.provenance = {"source": "phantom", "seed": args.seed, "index": i}
        recs.append(rec)
    io.save_manifest(out / "manifest.json", io.DatasetManifest({args.split: recs}, out))
    print(f"wrote {len(recs)} samples to {out / 'manifest.json'}")
    return 0


def cmd_ssm_build(args) -> int:
    from .shapes.ssm import build_ssm
    paths = []
    for p in args.shapes:
        p = Path(p)
        paths.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    if len(paths) < 2:
        raise CliError(f"need at least two shape files, found {len(paths)}")
    model = build_ssm([io.load_shape(p) for p in paths], args.retained, args.align)
    io.save_ssm(args.out, model)
    print(f"{len(paths)} shapes -> {model.mode_count} modes "
          f"({100 * model.variances.sum() / max(model.total_variance, 1e-300):.2f}% variance) -> {args.out}")
    return 0


def cmd_ssm_sample(args) -> int:
    from .shapes.ssm import sample_ssm
    model = io.load_ssm(args.ssm)
    out = Path(args.out)
    rng = Rng(args.seed)
    for i in range(args.count):
        io.save_shape(out / f"shape_{i:04d}.json", sample_ssm(model, seed=rng.child(i), clamp=args.clamp))
    print(f"wrote {args.count} shapes to {out}")
    return 0


def cmd_synth(args) -> int:
    from .shapes.biomech import EnergyConfig
    from .shapes.ssm import sample_ssm
    from .shapes.synth import NonDiffeomorphicError, synth_sample
    manifest = io.load_manifest(args.references)
    refs = manifest.splits[args.split]
    if any(r.shape is None for r in refs):
        raise CliError("every reference record needs a shape file")
    model = io.load_ssm(args.ssm)
    rng = Rng(args.seed)
    virtual_seeds = [int(rng.integers(0, 2**31)) for _ in range(args.virtual)]
    virtuals = [sample_ssm(model, seed=s) for s in virtual_seeds]
    cfg = EnergyConfig(max_iters=args.max_iters, seed=args.seed)
    out = Path(args.out)
    recs, rejected = [], 0
    for i, ref in enumerate(refs):
        img = io.load_image(manifest.resolve(ref.image))
        shp = io.load_shape(manifest.resolve(ref.shape))
        for j, (vs, v) in enumerate(zip(virtual_seeds, virtuals)):
            try:
                s = synth_sample(img, shp, v, cfg, args.three_class)
            except NonDiffeomorphicError as exc:
                rejected += 1
                log.warning("reference %d virtual %d rejected: %s", i, j, exc)
                continue
            rec = _write_sample(out, f"synth_r{i:03d}_v{j:03d}", s.image, s.mask, s.shape)
            rec.provenance = {"reference": ref.image, "reference_id": i, "virtual_seed": vs,
                              "residual_px": round(s.fit.residual_px, 6),
                              "det_positive_fraction": s.fit.det_positive_fraction,
                              "iterations": s.fit.iterations}
            recs.append(rec)
            print(f"ref {i} x virtual {j}: residual {s.fit.residual_px:.3f} px, "
                  f"det>0 {100 * s.fit.det_positive_fraction:.2f}%, {s.fit.iterations} iterations")
    io.save_manifest(out / "manifest.json", io.DatasetManifest({args.out_split: recs}, out))
    print(f"wrote {len(recs)} samples ({rejected} rejected) to {out / 'manifest.json'}")
    return 0


def cmd_augment(args) -> int:
    from .shapes.elastic import augment_pair
    img = io.load_image(args.image)
    mask = io.load_mask(args.mask)
    a, m = augment_pair(img, mask, Rng(args.seed), args.sigma, tuple(args.grids), args.translate)
    prefix = Path(args.out_prefix)
    io.save_image(prefix.with_name(prefix.name + "_image.pgm"), np.clip(a, 0.0, 1.0))
    io.save_mask(prefix.with_name(prefix.name + "_mask.pgm"), m)
    print(f"wrote {prefix}_image.pgm and {prefix}_mask.pgm")
    return 0


def _load_split(manifest_path, split, class_count):
    manifest = io.load_manifest(manifest_path)
    if split not in manifest.splits:
        raise CliError(f"split {split!r} not in manifest (have {sorted(manifest.splits)})")
    return manifest.load_split(split, class_count)


def _predictor(model):
    def predict(img):
        return model.predict_proba(np.asarray(img, dtype=np.float64)[None, None])[0].argmax(0)
    return predict


def cmd_train(args) -> int:
    from .metrics import dsc_table
    from .network import SymTC
    from .shapes.elastic import augment_pair
    from .training import TrainState, fit
    run = io.load_config(args.config) if args.config else RunConfig()
    if args.class_count:
        net = NetworkConfig.from_dict({**run.network.to_dict(), "class_count": args.class_count})
        run.network, run.loss.class_count = net, args.class_count
    if args.epochs is not None:
        run.optimizer.epochs = args.epochs
    if args.lr is not None:
        run.optimizer.lr = args.lr
    seed = run.seed if args.seed is None else args.seed
    images, masks = _load_split(args.manifest, args.split, run.network.class_count)
    model = SymTC(run.network, seed)
    state = TrainState.create(model, run.optimizer, run.loss)
    aug = run.augmentation

    def augment(img, mask, rng):
        return augment_pair(img, mask, rng, aug.elastic_sigma, aug.elastic_grids, aug.translate_px)

    predict = _predictor(model)
    log_rows = ["epoch\tloss\tdsc"]
    t0 = time.time()

    def callback(epoch, loss):
        if (epoch + 1) % args.log_every and epoch + 1 != run.optimizer.epochs:
            return False
        dsc = float(dsc_table([predict(x) for x in images], list(masks), run.network.class_count).mean())
        log_rows.append(f"{epoch + 1}\t{loss:.6f}\t{dsc:.3f}")
        print(f"epoch {epoch + 1:4d} loss {loss:.5f} train-DSC {dsc:6.2f} [{time.time() - t0:.0f}s]", flush=True)
        if args.checkpoint_every and (epoch + 1) % args.checkpoint_every == 0:
            io.save_model(args.out, model)
        return args.target_dsc is not None and dsc >= args.target_dsc

    fit(model, images, masks, state, run.optimizer.epochs, run.optimizer.batch_size, Rng(seed),
        None if args.no_augment else augment, callback)
    io.save_model(args.out, model)
    if args.log:
        io.atomic_write_text(args.log, "\n".join(log_rows) + "\n")
    print(f"saved {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import dsc_table, hd95_table
    model = io.load_model(args.model)
    k = model.cfg.class_count
    images, masks = _load_split(args.manifest, args.split, k)
    predict = _predictor(model)
    preds = [predict(x) for x in images]
    names = class_names(k)
    tables = [("DSC", dsc_table(preds, list(masks), k))]
    if args.hd95:
        tables.append(("HD95", hd95_table(preds, list(masks), k, spacing=args.spacing)))
    sep = "\t" if args.tsv else None
    header = ["metric"] + names + ["Average"]
    lines = [header]
    for label, tab in tables:
        per = np.nanmean(tab, axis=0)
        avg = tab.mean() if label == "DSC" else np.nanmean(tab)
        lines.append([label] + [f"{v:.3f}" for v in per] + [f"{avg:.3f}"])
    if sep:
        print("\n".join(sep.join(r) for r in lines))
    else:
        widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
        print("\n".join("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in lines))
    return 0


def cmd_robustness(args) -> int:
    from .robustness import robustness_sweep
    model = io.load_model(args.model)
    k = model.cfg.class_count
    images, masks = _load_split(args.manifest, args.split, k)
    rep = robustness_sweep(_predictor(model), images, masks, k, args.axis, args.shifts, args.max_shift,
                           with_hd95=args.hd95)
    print(rep.to_tsv() if args.tsv else rep.to_text(), end="" if args.tsv else "\n")
    return 0


def cmd_ablate(args) -> int:
    from .ablation import ablation_table, format_table
    if args.config:
        base = io.load_config(args.config).network
    else:
        base = getattr(NetworkConfig, args.preset)(class_count=args.class_count)
    rows = ablation_table(base, args.seed)
    text = format_table(rows, "\t" if args.tsv else None)
    print(text, end="")
    if args.out:
        io.atomic_write_text(args.out, format_table(rows, "\t"))
    return 0 if all(r.ok for r in rows) else 1


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="symtc", description="Spine segmentation with symbiotic CNN/Transformer modules.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    g.add_argument("--suite", action="append", choices=["ndgrad", "rmha", "loss", "network", "energy"])
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    ph = sub.add_parser("phantom", help="write synthetic reference images, masks and shapes")
    ph.add_argument("--count", type=int, default=4)
    ph.add_argument("--size", type=int, default=64)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--split", default="train")
    ph.add_argument("--three-class", action="store_true")
    ph.add_argument("--out", required=True)
    ph.set_defaults(func=cmd_phantom)

    s = sub.add_parser("ssm", help="statistical shape model")
    ssub = s.add_subparsers(dest="ssm_command", required=True, parser_class=_Parser)
    sb = ssub.add_parser("build")
    sb.add_argument("--shapes", nargs="+", required=True, help="shape JSON files or directories")
    sb.add_argument("--retained", type=float, default=0.95)
    sb.add_argument("--align", choices=["translation", "similarity"], default="translation")
    sb.add_argument("--out", required=True)
    sb.set_defaults(func=cmd_ssm_build)
    ss = ssub.add_parser("sample")
    ss.add_argument("--ssm", required=True)
    ss.add_argument("--count", type=int, default=1)
    ss.add_argument("--seed", type=int, default=0)
    ss.add_argument("--clamp", type=float, default=3.0)
    ss.add_argument("--out", required=True)
    ss.set_defaults(func=cmd_ssm_sample)

    sy = sub.add_parser("synth", help="references x virtual shapes -> labeled images")
    sy.add_argument("--references", required=True, help="manifest whose records carry shapes")
    sy.add_argument("--split", default="train")
    sy.add_argument("--ssm", required=True)
    sy.add_argument("--virtual", type=int, default=1)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--max-iters", type=int, default=2000)
    sy.add_argument("--three-class", action="store_true")
    sy.add_argument("--out-split", default="train")
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=cmd_synth)

    au = sub.add_parser("augment", help="elastic + translation augmentation preview")
    au.add_argument("--image", required=True)
    au.add_argument("--mask", required=True)
    au.add_argument("--seed", type=int, default=0)
    au.add_argument("--sigma", type=float, default=0.25)
    au.add_argument("--grids", type=_int_list, default=[9, 17])
    au.add_argument("--translate", type=int, default=16)
    au.add_argument("--out-prefix", required=True)
    au.set_defaults(func=cmd_augment)

    tr = sub.add_parser("train", help="train a model from a run config and manifest")
    tr.add_argument("--config")
    tr.add_argument("--manifest", required=True)
    tr.add_argument("--split", default="train")
    tr.add_argument("--class-count", type=int)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--no-augment", action="store_true")
    tr.add_argument("--log-every", type=int, default=10)
    tr.add_argument("--checkpoint-every", type=int, default=0)
    tr.add_argument("--target-dsc", type=float, help="stop once training DSC reaches this value")
    tr.add_argument("--log", help="write the per-epoch loss/DSC table here")
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="per-class DSC (and HD95) table")
    ev.add_argument("--model", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--split", default="train")
    ev.add_argument("--hd95", action="store_true")
    ev.add_argument("--spacing", type=float)
    ev.add_argument("--tsv", action="store_true")
    ev.set_defaults(func=cmd_eval)

    ro = sub.add_parser("robustness", help="DSC under horizontal or vertical shifts")
    ro.add_argument("--model", required=True)
    ro.add_argument("--manifest", required=True)
    ro.add_argument("--split", default="train")
    ro.add_argument("--axis", choices=["horizontal", "vertical"], default="horizontal")
    ro.add_argument("--shifts", type=_int_list, default=[0, 10, 20, 30, 40])
    ro.add_argument("--max-shift", type=int, default=40)
    ro.add_argument("--hd95", action="store_true")
    ro.add_argument("--tsv", action="store_true")
    ro.set_defaults(func=cmd_robustness)

    ab = sub.add_parser("ablate", help="TC-module path switches: parameter accounting and forward runs")
    ab.add_argument("--preset", choices=["toy", "micro", "full"], default="toy")
    ab.add_argument("--config")
    ab.add_argument("--class-count", type=int, default=12)
    ab.add_argument("--seed", type=int, default=0)
    ab.add_argument("--tsv", action="store_true")
    ab.add_argument("--out")
    ab.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, io.FormatError, FileNotFoundError, KeyError, ValueError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
