"""``lab``: command-line entry point for the whole workflow.

Exit codes: 0 success, 1 domain error (JSON message on stderr), 2 usage error.
Every command writes ``<output>.manifest.json`` (or ``manifest.json`` inside an
output directory) listing the resolved configuration and output digests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from .errors import LabError

DEFAULT_DETECTORS = ("textcnn", "nb_latent", "lda_latent", "logreg_latent",
                     "svmlin_latent", "svmrbf_latent", "rf_latent")


def _data_path(path: str | None, default_name: str) -> str:
    if path:
        return path
    return os.path.join(os.environ.get("LAB_DATA_DIR", "."), default_name)


def _read_json(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    def __init__(self, subcommand, args):
        self.subcommand = subcommand
        self.args = {k: v for k, v in vars(args).items() if k != "func"}
        self.config: dict = {}
        self.inputs: list = []
        self.outputs: list = []
        self.timings: dict = {}
        self._t0 = time.perf_counter()

    def timed(self, stage):
        manifest = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                manifest.timings[stage] = round(time.perf_counter() - self.t, 3)

        return _T()

    def to_json(self) -> dict:
        def digest_all(paths):
            out = []
            for p in paths:
                if os.path.isdir(p):
                    for name in sorted(os.listdir(p)):
                        f = os.path.join(p, name)
                        if os.path.isfile(f) and not name.endswith(".manifest.json") and name != "manifest.json":
                            out.append({"path": f, "sha256": sha256_file(f)})
                elif os.path.isfile(p):
                    out.append({"path": p, "sha256": sha256_file(p)})
            return out

        return {"subcommand": self.subcommand, "args": self.args, "config": self.config,
                "seed": self.args.get("seed"), "inputs": digest_all(self.inputs),
                "outputs": digest_all(self.outputs), "timings_s": self.timings,
                "wall_clock_s": round(time.perf_counter() - self._t0, 3)}

    def write(self, anchor):
        path = (os.path.join(anchor, "manifest.json") if os.path.isdir(anchor)
                else anchor + ".manifest.json")
        _write_text(path, json.dumps(self.to_json(), indent=2, sort_keys=True, default=str) + "\n")
        return path


# -- loaders ------------------------------------------------------------------

def _load_logs(path, split=None):
    from .logmodel import read_logs

    entries = read_logs(path)
    if split is not None and any(s == split for _, s in entries):
        entries = [(lg, s) for lg, s in entries if s == split]
    return [lg for lg, _ in entries]


def _load_segments(path):
    """Segments with labels from a JSONL file of 784-code segments or 3000-code logs."""
    import numpy as np

    from .logmodel import LOG_LENGTH, SEGMENT_LENGTH, Segment, segment

    segs, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            obj = json.loads(line)
            codes = np.asarray(obj["codes"], dtype=np.float64)
            label = int(obj.get("label", 1))
            if codes.size == LOG_LENGTH:
                if obj.get("split", "train") != "train":
                    continue
                for s in segment(codes, i):
                    segs.append(s)
                    labels.append(label)
            elif codes.size == SEGMENT_LENGTH:
                segs.append(Segment(codes, obj.get("source")))
                labels.append(label)
            else:
                raise LabError(f"{path}:{i + 1}: expected {SEGMENT_LENGTH} or {LOG_LENGTH} codes")
    return segs, np.asarray(labels, dtype=np.int64)


def _dump_segments(segments, label=1) -> str:
    return "".join(json.dumps({"codes": [int(v) for v in s.codes], "label": label,
                               "origin": "generated"}, separators=(",", ":")) + "\n"
                   for s in segments)


def _train_textcnn(corpus, args, manifest):
    from .classifiers.textcnn import TextCnnConfig, train_textcnn
    from .logmodel import Corpus

    cfg_obj = _read_json(getattr(args, "config", None)).get("textcnn", {})
    cfg = TextCnnConfig.from_json({**TextCnnConfig(seed=args.seed).to_json(), **cfg_obj})
    if getattr(args, "epochs", None):
        cfg.epochs = args.epochs
    manifest.config["textcnn"] = cfg.to_json()
    X, y = Corpus.arrays(corpus.train)
    with manifest.timed("train_textcnn"):
        return train_textcnn(X, y, cfg)


def _detector_suite(names, corpus, args, manifest):
    from .classifiers.detectors import build_detector, load_detector
    from .classifiers.textcnn import TextCNN
    from .logmodel import Corpus

    X, y = Corpus.arrays(corpus.train)
    models_dir = getattr(args, "models", None)
    dets = {}
    textcnn = None
    for name in names:
        path = os.path.join(models_dir, f"{name}.ckpt") if models_dir else None
        if path and os.path.exists(path):
            dets[name] = load_detector(path)
            manifest.inputs.append(path)
            continue
        if textcnn is None:
            tpath = getattr(args, "textcnn", None) or (
                os.path.join(models_dir, "textcnn.ckpt") if models_dir else None)
            if tpath and os.path.exists(tpath):
                textcnn = TextCNN.load(tpath)
                manifest.inputs.append(tpath)
            else:
                textcnn = _train_textcnn(corpus, args, manifest)
        with manifest.timed(f"train_{name}"):
            dets[name] = build_detector(name, X, y, textcnn, seed=args.seed)
    return dets


def _gan_config(args, manifest):
    from .acgan import GanConfig

    obj = _read_json(getattr(args, "config", None))
    obj = obj.get("gan", obj) if isinstance(obj, dict) else {}
    base = GanConfig(seed=args.seed).to_json()
    base.update({k: v for k, v in obj.items() if k in base})
    for flag, key in (("epochs", "max_epochs"), ("batch", "batch_size"), ("latent", "latent_dim")):
        v = getattr(args, flag, None)
        if v is not None:
            base[key] = v
    cfg = GanConfig.from_json(base)
    manifest.config["gan"] = cfg.to_json()
    return cfg


# -- subcommands --------------------------------------------------------------

def cmd_gen_data(args, manifest):
    from .logmodel import write_corpus
    from .synthgen import CorpusConfig, build_corpus

    obj = _read_json(args.config)
    if args.config:
        manifest.inputs.append(args.config)
    cfg = CorpusConfig.from_json(obj) if obj else CorpusConfig()
    if args.seed_given:
        cfg.seed = args.seed
    manifest.config["corpus"] = cfg.to_json()
    out = _data_path(args.out, "corpus.jsonl")
    with manifest.timed("build_corpus"):
        corpus = build_corpus(cfg)
    write_corpus(corpus, out)
    manifest.outputs.append(out)
    return out


def cmd_train_clf(args, manifest):
    from .classifiers.detectors import build_detector, save_detector
    from .classifiers.textcnn import TextCNN
    from .logmodel import Corpus, read_corpus

    corpus = read_corpus(args.corpus, args.seed)
    manifest.inputs.append(args.corpus)
    out = _data_path(args.out, f"{args.kind}.ckpt")
    if args.kind == "textcnn":
        model = _train_textcnn(corpus, args, manifest)
        model.save(out)
    else:
        X, y = Corpus.arrays(corpus.train)
        textcnn = None
        if args.kind.endswith("_latent"):
            if not args.textcnn:
                raise LabError(f"{args.kind} needs --textcnn (a trained Text-CNN checkpoint)")
            textcnn = TextCNN.load(args.textcnn)
            manifest.inputs.append(args.textcnn)
        with manifest.timed("train"):
            det = build_detector(args.kind, X, y, textcnn, seed=args.seed)
        save_detector(det, out)
    manifest.outputs.append(out)
    return out


def cmd_train_gan(args, manifest):
    from .acgan import train_acgan

    cfg = _gan_config(args, manifest)
    segs, labels = _load_segments(args.segments)
    manifest.inputs.append(args.segments)
    out = _data_path(args.out, "gan.ckpt")
    with manifest.timed("train_acgan"):
        pair, trace = train_acgan(segs, labels, cfg)
    pair.save(out, trace)
    manifest.config["trace"] = trace.to_json()
    manifest.outputs.append(out)
    return out


def cmd_gen_adv(args, manifest):
    import numpy as np

    from .acgan import GanPair, generate_malicious

    pair = GanPair.load(args.gan)
    manifest.inputs.append(args.gan)
    segs = generate_malicious(pair, args.count, np.random.default_rng([args.seed, 40]))
    out = _data_path(args.out, "segments.jsonl")
    _write_text(out, _dump_segments(segs))
    manifest.outputs.append(out)
    return out


def cmd_assess_quality(args, manifest):
    from .ngram import References, batch_quality

    samples, _ = _load_segments_or_logs(args.samples)
    refs = References.from_logs(_load_logs(args.refs, "test"))
    manifest.inputs += [args.samples, args.refs]
    n_rule = tuple(int(n) for n in args.n_rule.split(","))
    report = batch_quality(samples, refs, tau=args.tau)
    passed = sum(report.passes(i, n_rule) for i in report.per_sample)
    out = _data_path(args.out, "quality.csv")
    _write_text(out, report.to_csv())
    summary = json.loads(report.summary_json())
    summary.update({"n_rule": list(n_rule), "passed": int(passed), "total": len(samples)})
    summary_path = os.path.splitext(out)[0] + "_summary.json"
    _write_text(summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest.outputs += [out, summary_path]
    return out


def _load_segments_or_logs(path):
    """Raw code vectors of any length from a JSONL file."""
    import numpy as np

    rows, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                rows.append(np.asarray(obj["codes"], dtype=np.int64))
                labels.append(int(obj.get("label", 1)))
    return rows, labels


def cmd_run_attack(args, manifest):
    from .acgan import GanPair
    from .logmodel import dumps_jsonl, read_corpus
    from .pipeline import AttackConfig, run_attack

    corpus = read_corpus(args.corpus, args.seed)
    manifest.inputs.append(args.corpus)
    obj = _read_json(args.config)
    gan_cfg = _gan_config(args, manifest)
    cfg = AttackConfig(K=args.K if args.K is not None else obj.get("K", 512),
                       tau=args.tau if args.tau is not None else obj.get("tau", 1.5),
                       n_rule=obj.get("n_rule", (4, 5, 6)),
                       concat_count=obj.get("concat_count", 4),
                       max_rounds=args.max_rounds if args.max_rounds is not None
                       else obj.get("max_rounds", 20),
                       seed=args.seed, gan=gan_cfg)
    manifest.config["attack"] = cfg.to_json()
    names = [n for n in args.detectors.split(",") if n]
    dets = _detector_suite(names, corpus, args, manifest)
    pair = None
    if args.gan:
        pair = GanPair.load(args.gan)
        manifest.inputs.append(args.gan)
    out = _data_path(args.out, "attack_report.json")
    try:
        with manifest.timed("attack"):
            run = run_attack(corpus, dets, cfg, pair)
    finally:
        manifest.write(out)
    _write_text(out, run.report.to_json() + "\n")
    csv_path = os.path.splitext(out)[0] + ".csv"
    _write_text(csv_path, run.report.detection_csv())
    adv = args.adv_out or os.path.splitext(out)[0] + "_logs.jsonl"
    _write_text(adv, dumps_jsonl(run.logs))
    manifest.outputs += [out, csv_path, adv]
    if pair is None:
        gan_path = os.path.splitext(out)[0] + "_gan.ckpt"
        run.pair.save(gan_path, run.trace)
        manifest.outputs.append(gan_path)
    return out


def cmd_evaluate(args, manifest):
    from .classifiers.detectors import load_detector
    from .classifiers.metrics import reports_to_csv
    from .logmodel import Corpus

    det = load_detector(args.model)
    logs = _load_logs(args.test, "test")
    manifest.inputs += [args.model, args.test]
    X, y = Corpus.arrays(logs)
    rep = det.evaluate(X, y)
    out = _data_path(args.report, "report.csv")
    _write_text(out, reports_to_csv({det.name: rep}))
    manifest.outputs.append(out)
    return out


def cmd_analyze_latent(args, manifest):
    import numpy as np

    from .classifiers.detectors import load_detector
    from .latent import latent_study
    from .logmodel import Corpus, read_corpus

    det = load_detector(args.model)
    if det.textcnn is None:
        raise LabError("analyze-latent needs a Text-CNN or a latent-composed model")
    corpus = read_corpus(args.corpus)
    gen = _load_logs(args.generated)
    manifest.inputs += [args.model, args.corpus, args.generated]
    Xtr, ytr = Corpus.arrays(corpus.train)
    Xte, yte = Corpus.arrays(corpus.test)
    G = Corpus.arrays(gen)[0]
    raw = {"train_malicious": Xtr[ytr == 1], "train_benign": Xtr[ytr == 0],
           "test_malicious": Xte[yte == 1], "test_benign": Xte[yte == 0], "generated": G}
    raw = {k: v.astype(np.float64) for k, v in raw.items() if len(v)}
    lat = {k: det.textcnn.latent(v) for k, v in raw.items()}
    out = _data_path(args.out, "latent")
    with manifest.timed("latent_study"):
        latent_study(raw, lat, out)
    manifest.outputs.append(out)
    return out


def cmd_replay(args, manifest):
    from .replayer import SandboxConfig, first_events, replay

    rows, _ = _load_segments_or_logs(args.codes)
    manifest.inputs.append(args.codes)
    picked = rows if args.index is None else [rows[args.index]]
    if args.count is not None:
        picked = picked[:args.count]
    results = []
    for i, codes in enumerate(picked):
        root = os.path.join(args.sandbox, f"run{i:04d}")
        cfg = SandboxConfig(root=root, seed=args.seed, delay_ms=args.delay_ms)
        res = replay(first_events(codes, args.limit), cfg)
        results.append(res.to_json())
    out = _data_path(args.report, "replay_report.json")
    aligns = [r["alignment"] for r in results]
    _write_text(out, json.dumps({"runs": results, "mean_alignment": sum(aligns) / len(aligns)
                                 if aligns else None}, indent=2, sort_keys=True) + "\n")
    manifest.outputs.append(out)
    return out


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 1)")
    common.add_argument("--threads", type=int, default=1,
                        help="BLAS threads for numeric kernels (default 1, reproducible)")

    p = argparse.ArgumentParser(prog="lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("gen-data", cmd_gen_data, "build a synthetic labelled corpus")
    sp.add_argument("--config", help="JSON corpus configuration (counts, templates, mixes)")
    sp.add_argument("--out", help="output JSONL corpus")

    sp = add("train-clf", cmd_train_clf, "train one detector")
    sp.add_argument("--corpus", required=True, help="JSONL corpus (train split is used)")
    sp.add_argument("--kind", required=True,
                    help="textcnn, <kind>_latent or <kind>_raw with kind in "
                         "nb, lda, logreg, svmlin, svmrbf, rf")
    sp.add_argument("--textcnn", help="trained Text-CNN checkpoint (for *_latent kinds)")
    sp.add_argument("--epochs", type=int, help="Text-CNN epochs")
    sp.add_argument("--config", help="JSON with a 'textcnn' section")
    sp.add_argument("--out", help="output checkpoint")

    sp = add("train-gan", cmd_train_gan, "train the ACGAN on segments")
    sp.add_argument("--segments", required=True,
                    help="JSONL of 784-code segments or 3000-code logs (train split)")
    sp.add_argument("--epochs", type=int, help="maximum epochs")
    sp.add_argument("--batch", type=int, help="batch size")
    sp.add_argument("--latent", type=int, help="latent noise dimension")
    sp.add_argument("--config", help="JSON GAN configuration")
    sp.add_argument("--out", help="output checkpoint")

    sp = add("gen-adv", cmd_gen_adv, "sample malicious segments from a trained generator")
    sp.add_argument("--gan", required=True, help="ACGAN checkpoint")
    sp.add_argument("--count", type=int, required=True, help="number of segments")
    sp.add_argument("--out", help="output JSONL")

    sp = add("assess-quality", cmd_assess_quality, "n-gram quality of samples against test logs")
    sp.add_argument("--samples", required=True, help="JSONL of samples")
    sp.add_argument("--refs", required=True, help="JSONL of labelled reference logs")
    sp.add_argument("--tau", type=float, default=1.5, help="quality threshold")
    sp.add_argument("--n-rule", default="4,5,6", help="n values that must all pass")
    sp.add_argument("--out", help="output CSV (sample_id,n,q)")

    sp = add("run-attack", cmd_run_attack, "generate adversarial logs and score detectors")
    sp.add_argument("--corpus", required=True, help="JSONL corpus with train and test splits")
    sp.add_argument("--detectors", default=",".join(DEFAULT_DETECTORS),
                    help="comma-separated detector names")
    sp.add_argument("--K", type=int, help="passing segments to collect (default 512)")
    sp.add_argument("--tau", type=float, help="quality threshold (default 1.5)")
    sp.add_argument("--max-rounds", type=int, help="regeneration rounds (default 20)")
    sp.add_argument("--gan", help="use this trained ACGAN instead of training one")
    sp.add_argument("--models", help="directory with <detector>.ckpt files to reuse")
    sp.add_argument("--textcnn", help="trained Text-CNN checkpoint")
    sp.add_argument("--epochs", type=int, help="GAN epochs")
    sp.add_argument("--batch", type=int, help="GAN batch size")
    sp.add_argument("--latent", type=int, help="GAN latent dimension")
    sp.add_argument("--config", help="JSON attack configuration (may hold a 'gan' section)")
    sp.add_argument("--adv-out", help="where to write the adversarial logs")
    sp.add_argument("--out", help="output JSON report")

    sp = add("evaluate", cmd_evaluate, "metrics of a detector on labelled logs")
    sp.add_argument("--model", required=True, help="detector checkpoint")
    sp.add_argument("--test", required=True, help="JSONL logs (test split if present)")
    sp.add_argument("--report", help="output CSV")

    sp = add("analyze-latent", cmd_analyze_latent, "distance and PCA study of latent features")
    sp.add_argument("--model", required=True, help="Text-CNN (or latent detector) checkpoint")
    sp.add_argument("--corpus", required=True, help="JSONL corpus")
    sp.add_argument("--generated", required=True, help="JSONL of generated logs")
    sp.add_argument("--out", help="output directory")

    sp = add("replay", cmd_replay, "replay code sequences as sandboxed file operations")
    sp.add_argument("--codes", required=True, help="JSONL of code sequences")
    sp.add_argument("--sandbox", required=True, help="parent directory for fresh sandboxes")
    sp.add_argument("--index", type=int, help="replay only this line")
    sp.add_argument("--count", type=int, help="replay at most this many lines")
    sp.add_argument("--limit", type=int, default=100, help="non-padding codes per sequence")
    sp.add_argument("--delay-ms", type=float, default=0.0, help="pause between operations")
    sp.add_argument("--report", help="output JSON")
    return p


def _set_threads(n: int):
    # numeric modules are imported lazily, after this runs
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 1
    _set_threads(args.threads)
    manifest = RunManifest(args.command, args)
    try:
        anchor = args.func(args, manifest)
        manifest.write(anchor)
    except (LabError, OSError, ValueError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("rounds", "passed", "epoch", "line_no"):
            if hasattr(exc, attr):
                err[attr] = getattr(exc, attr)
        print(json.dumps(err), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
