"""Command line front end.

Five subcommands cover the full workflow: `synth` generates a seeded
polarized corpus, `bootstrap` derives pseudo labels from raw tweets,
`classify` runs any method over a train/test split, `evaluate` scores a
prediction file against gold labels, and `report` merges row CSVs and
prints per-method summaries.  Every flag can also come from a key=value
config file via --config; explicit flags win over config values.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import evalkit, synth
from .cluster import UNASSIGNED
from .corpus import (load_corpus, load_gold_labels, merge_timeline, save_gold_labels,
                     with_labels)
from .embedding import UmapParams
from .evalkit import (ReportRow, confusion, format_percent, metrics, read_report_csv,
                      summarize, write_predictions_tsv, write_report_csv,
                      write_report_json)
from .pipeline import (METHOD_EXTERNAL, METHOD_SVM_RT, METHOD_SVM_TEXT, METHOD_TEXTCLF,
                       METHOD_UNSUPERVISED, METHODS, ExperimentConfig,
                       UnsupervisedParams, bootstrap_training_set, compute_predictions)

log = logging.getLogger(__name__)

CONDITIONS = ("none", "train", "test", "both")


def _count_spec(raw: str) -> synth.CountSpec:
    """Parse lo:hi or lo:hi:shape into a tweet-count specification."""
    parts = raw.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected LO:HI or LO:HI:SHAPE, got {raw!r}")
    try:
        low, high = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"counts must be integers in {raw!r}") from None
    shape = parts[2] if len(parts) == 3 else "uniform"
    spec = synth.CountSpec(low=low, high=high, shape=shape)
    try:
        spec.validate()
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return spec


def _read_config(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


_TRUE_WORDS = ("1", "true", "yes", "on")
_FALSE_WORDS = ("0", "false", "no", "off")


def _config_defaults(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    """Install config values as parser defaults, converting types per flag."""
    remaining = dict(values)
    for action in parser._actions:
        if action.dest not in remaining:
            continue
        raw = remaining.pop(action.dest)
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            lowered = raw.lower()
            if lowered not in _TRUE_WORDS + _FALSE_WORDS:
                raise ValueError(f"config key {action.dest!r} must be boolean, got {raw!r}")
            converted: object = lowered in _TRUE_WORDS
        elif action.type is not None:
            converted = action.type(raw)
        else:
            converted = raw
        if action.choices is not None and converted not in action.choices:
            raise ValueError(f"config key {action.dest!r}: {converted!r} not in "
                             f"{tuple(action.choices)}")
        parser.set_defaults(**{action.dest: converted})
    remaining.pop("config", None)
    if remaining:
        raise ValueError(f"unknown config keys: {sorted(remaining)}")


def _add_umap_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=15, help="neighbours per point")
    parser.add_argument("--umap-dim", type=int, default=2, help="embedding dimension")
    parser.add_argument("--min-dist", type=float, default=0.1)
    parser.add_argument("--umap-epochs", type=int, default=200)
    parser.add_argument("--negative-sample-rate", type=int, default=5)
    parser.add_argument("--quantile", type=float, default=0.3,
                        help="pairwise-distance quantile used as the bandwidth")
    parser.add_argument("--min-members", type=int, default=3,
                        help="clusters smaller than this dissolve")


def _unsupervised_params(args) -> UnsupervisedParams:
    umap_params = UmapParams(k=args.k, dim=args.umap_dim, min_dist=args.min_dist,
                             epochs=args.umap_epochs,
                             negative_sample_rate=args.negative_sample_rate)
    min_users = args.min_users if args.min_users is not None else 1
    return UnsupervisedParams(umap=umap_params, quantile=args.quantile,
                              min_members=args.min_members, min_users=min_users)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stancekit",
        description="Stance detection for polarized topics from retweet behaviour.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic polarized corpus")
    p.add_argument("--config", help="key=value file supplying flag defaults")
    p.add_argument("--out-dir",
                   help="directory for tweets.jsonl, gold.tsv and timeline.jsonl")
    p.add_argument("--topic", default="synthetic")
    p.add_argument("--users-per-side", type=int, default=100)
    p.add_argument("--accounts-per-side", type=int, default=50)
    p.add_argument("--polarization", type=float, default=0.9,
                   help="probability a retweet stays on the user's own side")
    p.add_argument("--tweets-per-user", type=_count_spec, default=synth.CountSpec(5, 20),
                   metavar="LO:HI[:SHAPE]")
    p.add_argument("--vocab-per-side", type=int, default=200)
    p.add_argument("--timeline-tweets", type=_count_spec, default=None,
                   metavar="LO:HI[:SHAPE]",
                   help="also generate off-topic timeline tweets per user")
    p.add_argument("--accounts-per-user", type=int, default=None,
                   help="per-user followed-account count (default: side-wide Zipf)")
    p.add_argument("--retweet-probability", type=float, default=1.0,
                   help="chance a topical tweet is a retweet vs an original post")
    p.add_argument("--timeline-retweet-probability", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bootstrap", help="derive pseudo stance labels from tweets")
    p.add_argument("--config", help="key=value file supplying flag defaults")
    p.add_argument("--tweets", help="topical tweets, JSONL")
    p.add_argument("--topic", default="unknown")
    p.add_argument("--out", help="pseudo-label TSV to write")
    p.add_argument("--n-active", type=int, default=5000,
                   help="number of most-active users to embed")
    p.add_argument("--min-tweets", type=int, default=10)
    p.add_argument("--per-cluster", type=int, default=500,
                   help="users sampled from each of the two stance clusters")
    p.add_argument("--min-users", type=int, default=None,
                   help="vocabulary threshold (defaults per feature mode)")
    p.add_argument("--seed", type=int, default=0)
    _add_umap_flags(p)

    p = sub.add_parser("classify", help="predict test-user stances")
    p.add_argument("--config", help="key=value file supplying flag defaults")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--train-tweets")
    p.add_argument("--train-labels",
                   help="user_id<TAB>label TSV (gold or bootstrap output)")
    p.add_argument("--train-timeline", default=None)
    p.add_argument("--test-tweets")
    p.add_argument("--test-timeline", default=None)
    p.add_argument("--expand-train", action="store_true",
                   help="include timeline tweets on the training side")
    p.add_argument("--expand-test", action="store_true",
                   help="include timeline tweets on the test side")
    p.add_argument("--topic", default="unknown")
    p.add_argument("--out", help="prediction TSV to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--C", type=float, default=1.0, help="SVM regularization")
    p.add_argument("--min-users", type=int, default=None,
                   help="vocabulary threshold (defaults per feature mode)")
    p.add_argument("--dim", type=int, default=100, help="text-classifier dimension")
    p.add_argument("--lr", type=float, default=0.1, help="text-classifier step size")
    p.add_argument("--epochs", type=int, default=5, help="text-classifier epochs")
    p.add_argument("--scores", default=None,
                   help="tweet_id<TAB>p0<TAB>p1 TSV for method EXTERNAL")
    p.add_argument("--batched", action="store_true",
                   help="embed all test users in one pass (faster, approximate)")
    _add_umap_flags(p)

    p = sub.add_parser("evaluate", help="score a prediction file against gold labels")
    p.add_argument("--config", help="key=value file supplying flag defaults")
    p.add_argument("--predictions")
    p.add_argument("--gold")
    p.add_argument("--topic", default="unknown")
    p.add_argument("--method", default="unknown")
    p.add_argument("--condition", default="none", choices=CONDITIONS)
    p.add_argument("--out", help="single-row report CSV")
    p.add_argument("--json", dest="json_out", default=None, help="also write JSON")

    p = sub.add_parser("report", help="merge report rows and summarize per method")
    p.add_argument("--config", help="key=value file supplying flag defaults")
    p.add_argument("--rows", nargs="+", help="report CSVs to merge")
    p.add_argument("--out", help="merged CSV")
    p.add_argument("--json", dest="json_out", default=None, help="also write JSON")
    return parser


def _cmd_synth(args) -> int:
    params = synth.SynthParams(
        n_users_per_side=args.users_per_side,
        n_accounts_per_side=args.accounts_per_side,
        polarization=args.polarization,
        tweets_per_user=args.tweets_per_user,
        text_vocab_per_side=args.vocab_per_side,
        seed=args.seed,
        timeline_tweets_per_user=args.timeline_tweets,
        accounts_per_user=args.accounts_per_user,
        retweet_probability=args.retweet_probability,
        timeline_retweet_probability=args.timeline_retweet_probability)
    corpus, _ = synth.generate(params, topic=args.topic)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .corpus import write_tweets_jsonl

    topical = [t for uid in corpus.sorted_user_ids()
               for t in corpus.users[uid].topical_tweets]
    write_tweets_jsonl(topical, out_dir / "tweets.jsonl")
    save_gold_labels(synth.gold_labels(corpus), out_dir / "gold.tsv")
    written = [out_dir / "tweets.jsonl", out_dir / "gold.tsv"]
    if args.timeline_tweets is not None:
        timeline = [t for uid in corpus.sorted_user_ids()
                    for t in corpus.users[uid].timeline_tweets]
        write_tweets_jsonl(timeline, out_dir / "timeline.jsonl")
        written.append(out_dir / "timeline.jsonl")
    print(f"wrote {', '.join(str(p) for p in written)}")
    return 0


def _cmd_bootstrap(args) -> int:
    corpus = load_corpus(args.tweets, args.topic)
    labeled = bootstrap_training_set(corpus, n_active=args.n_active,
                                     min_tweets=args.min_tweets,
                                     per_cluster=args.per_cluster, seed=args.seed,
                                     params=_unsupervised_params(args))
    save_gold_labels({record.user_id: stance for record, stance in labeled}, args.out)
    sizes = [sum(1 for _, s in labeled if s == stance) for stance in (0, 1)]
    print(f"wrote {args.out}: {sizes[0]} users with stance 0, {sizes[1]} with stance 1")
    return 0


def _cmd_classify(args) -> int:
    train = load_corpus(args.train_tweets, args.topic)
    if args.train_timeline:
        train = merge_timeline(train, args.train_timeline)
    train = with_labels(train, load_gold_labels(args.train_labels))
    test = load_corpus(args.test_tweets, args.topic)
    if args.test_timeline:
        test = merge_timeline(test, args.test_timeline)

    hp: dict = {}
    if args.method in (METHOD_SVM_RT, METHOD_SVM_TEXT):
        hp["C"] = args.C
        if args.min_users is not None:
            hp["min_users"] = args.min_users
    elif args.method == METHOD_TEXTCLF:
        hp.update(dim=args.dim, lr=args.lr, epochs=args.epochs)
    elif args.method == METHOD_EXTERNAL:
        if not args.scores:
            raise SystemExit("classify: --scores is required for method EXTERNAL")
        hp["scores_path"] = args.scores
    elif args.method == METHOD_UNSUPERVISED:
        hp["unsupervised_params"] = _unsupervised_params(args)
        hp["batched"] = args.batched

    config = ExperimentConfig(topic=args.topic, method=args.method,
                              expand_train=args.expand_train,
                              expand_test=args.expand_test, seed=args.seed,
                              hyperparameters=hp)
    predictions = compute_predictions(config, train, test)
    write_predictions_tsv(predictions, args.out)
    unassigned = sum(1 for label in predictions.values() if label == UNASSIGNED)
    print(f"wrote {args.out}: {len(predictions)} predictions, {unassigned} unassigned")
    return 0


def _row_from_files(args) -> ReportRow:
    predictions = evalkit.read_predictions_tsv(args.predictions)
    gold = load_gold_labels(args.gold)
    missing = [uid for uid in predictions if uid not in gold]
    if missing:
        raise SystemExit(f"evaluate: no gold label for {sorted(missing)[:5]}")
    cm = confusion(predictions, {uid: gold[uid] for uid in predictions})
    if cm.total_assigned == 0:
        return ReportRow(topic=args.topic, method=args.method, condition=args.condition,
                         accuracy=0.0, precision=0.0, recall=0.0, f1=0.0, coverage=0.0,
                         n_test=len(predictions), n_unassigned=cm.unassigned)
    report = metrics(cm)
    return ReportRow(topic=args.topic, method=args.method, condition=args.condition,
                     accuracy=report.accuracy, precision=report.precision,
                     recall=report.recall, f1=report.f1, coverage=report.coverage,
                     n_test=len(predictions), n_unassigned=cm.unassigned)


def _cmd_evaluate(args) -> int:
    row = _row_from_files(args)
    write_report_csv([row], args.out)
    if args.json_out:
        write_report_json([row], args.json_out)
    print(f"{row.method}/{row.condition}: A={format_percent(row.accuracy)} "
          f"P={format_percent(row.precision)} R={format_percent(row.recall)} "
          f"F={format_percent(row.f1)} coverage={format_percent(row.coverage)} "
          f"({row.n_unassigned}/{row.n_test} unassigned)")
    return 0


def _cmd_report(args) -> int:
    rows: list[ReportRow] = []
    for path in args.rows:
        rows.extend(read_report_csv(path))
    write_report_csv(rows, args.out)
    if args.json_out:
        write_report_json(rows, args.json_out)
    by_method: dict[str, list[ReportRow]] = {}
    for row in rows:
        by_method.setdefault(row.method, []).append(row)
    for method in sorted(by_method):
        means, stds = summarize(by_method[method])
        cells = " ".join(f"{measure[0].upper()}={format_percent(means[measure])}"
                         f"+-{format_percent(stds[measure])}"
                         for measure in evalkit.MEASURES)
        print(f"{method} ({len(by_method[method])} rows): {cells}")
    print(f"wrote {args.out}" + (f" and {args.json_out}" if args.json_out else ""))
    return 0


_COMMANDS = {"synth": _cmd_synth, "bootstrap": _cmd_bootstrap, "classify": _cmd_classify,
             "evaluate": _cmd_evaluate, "report": _cmd_report}

# Checked after the config merge, so required values may come from either side.
_REQUIRED = {"synth": ("out_dir",),
             "bootstrap": ("tweets", "out"),
             "classify": ("method", "train_tweets", "train_labels", "test_tweets", "out"),
             "evaluate": ("predictions", "gold", "out"),
             "report": ("rows", "out")}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        # Config values become defaults on a fresh parser; explicit flags
        # still win because argv is parsed again on top of them.
        parser = build_parser()
        target = next(action for action in parser._actions
                      if isinstance(action, argparse._SubParsersAction))
        try:
            _config_defaults(target.choices[args.command], _read_config(args.config))
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
        args = parser.parse_args(argv)
    missing = [name for name in _REQUIRED[args.command]
               if getattr(args, name) in (None, [])]
    if missing:
        parser.error(f"{args.command}: missing required "
                     + ", ".join("--" + name.replace("_", "-") for name in missing))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"stancekit {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
