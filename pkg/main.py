import argparse
import logging
import sys
import traceback

from baseline import BaselineConfig, IdfTable, baseline_scores, build_idf
from config import REFERENCE_TITLE_ONLY, REFERENCE_TITLE_PLUS_QUERIES, load_settings
from corpus import SyntheticSpec, generate_synthetic_corpus, load_catalog, qualifies_for_queries, read_catalog, write_catalog
from errors import SkuRankError
from evaluate import baseline_system, evaluate_systems, neural_system, sweep_title_weight
from logger import logger, set_console_level
from neural import NetworkConfig, load_checkpoint
from oracle import OracleConfig, build_candidate_sets, load_candidate_sets, save_candidate_sets
from rank import RankedSummary, rank_document, rank_scores, write_rankings
from textprep import Vocabulary, build_vocab, encode_document
from train import TrainConfig, train


def _documents(args, settings, catalog=None):
    return load_catalog(catalog or args.catalog, args.mode or settings.reference_mode,
                        settings.query_limit, settings.min_query_clicks)


def _encoded(docs, vocab, settings):
    return [encode_document(d, vocab, settings.max_sentence_len, settings.max_doc_sentences) for d in docs]


def cmd_synth(args, settings):
    num_docs = args.num_docs or settings.synth_num_docs
    skus = generate_synthetic_corpus(settings.seed, num_docs, SyntheticSpec.from_settings(settings))
    write_catalog(skus, args.out)


def cmd_ingest(args, settings):
    raws = read_catalog(args.catalog)
    docs = _documents(args, settings)
    sentences = sum(len(d) for d in docs)
    labeled = sum(1 for d in docs if d.relevance_labels is not None)
    engaged = sum(1 for r in raws if qualifies_for_queries(r, settings.min_query_clicks))
    logger.info(f"Main: {len(raws)} records, {len(docs)} usable documents, {sentences} sentences")
    logger.info(f"Main: {labeled} documents carry relevance labels; "
                f"{engaged} meet the query engagement threshold ({settings.min_query_clicks}+ clicks)")


def cmd_build_vocab(args, settings):
    docs = _documents(args, settings)
    # Reference text shares the token space with the sentences
    streams = [list(d.sentences) + list(d.reference.sentences) for d in docs]
    vocab = build_vocab(streams, settings.vocab_max_size, settings.vocab_min_freq)
    vocab.save(args.out)


def cmd_build_idf(args, settings):
    build_idf(_documents(args, settings)).save(args.out)


def cmd_make_oracle(args, settings):
    vocab = Vocabulary.load(args.vocab)
    docs = _encoded(_documents(args, settings), vocab, settings)
    cfg = OracleConfig(p=settings.oracle_p, m=settings.oracle_m, k=settings.oracle_k)
    save_candidate_sets(build_candidate_sets(docs, cfg, progress=args.progress), args.out)


def cmd_train(args, settings):
    vocab = Vocabulary.load(args.vocab)
    docs = _encoded(_documents(args, settings), vocab, settings)
    candidate_sets = load_candidate_sets(args.candidates)
    validation = None
    if args.valid_catalog:
        validation = _encoded(_documents(args, settings, args.valid_catalog), vocab, settings)
    _, stats = train(
        docs,
        candidate_sets,
        TrainConfig.from_settings(settings),
        NetworkConfig.from_settings(settings),
        vocab_size=len(vocab),
        vocab_hash=vocab.fingerprint(),
        out_dir=args.out_dir,
        validation=validation,
        progress=args.progress,
    )
    logger.info(f"Main: Training finished, final reward {stats.mean_reward[-1]:.4f}")


def cmd_rank(args, settings):
    vocab = Vocabulary.load(args.vocab)
    params = load_checkpoint(args.checkpoint, vocab.fingerprint())
    docs = _encoded(_documents(args, settings), vocab, settings)
    top_k = args.top_k or settings.top_k
    summaries = [rank_document(d, params, top_k, vocab) for d in docs]
    write_rankings(summaries, docs, args.out)


def cmd_baseline(args, settings):
    docs = _documents(args, settings)
    idf = IdfTable.load(args.idf) if args.idf else build_idf(docs)
    cfg = BaselineConfig(mode=args.baseline_mode or settings.baseline_mode,
                         title_weight=args.weight or settings.title_weight)
    top_k = args.top_k or settings.top_k
    summaries = []
    for doc in docs:
        scores = baseline_scores(doc, idf, cfg)
        ranked, top = rank_scores(scores, top_k)
        summaries.append(RankedSummary(
            sku_id=doc.sku_id,
            ranked_indices=tuple(ranked),
            top_k_indices=tuple(top),
            scores=tuple(scores[i] for i in ranked),
        ))
    write_rankings(summaries, docs, args.out)


def cmd_eval(args, settings):
    docs = _documents(args, settings)
    idf = IdfTable.load(args.idf) if args.idf else build_idf(docs)
    systems = {}
    for mode in ("weighted", "unweighted", "filtered"):
        systems[f"tfidf-{mode}"] = baseline_system(idf, BaselineConfig(mode=mode, title_weight=settings.title_weight))
    if args.model:
        if not args.vocab:
            raise SkuRankError("eval: --vocab is required with --model")
        vocab = Vocabulary.load(args.vocab)
        for entry in args.model:
            name, _, path = entry.partition("=")
            if not path:
                raise SkuRankError(f"eval: --model expects name=checkpoint, got {entry!r}")
            params = load_checkpoint(path, vocab.fingerprint())
            systems[name] = neural_system(params, vocab, settings.max_sentence_len, settings.max_doc_sentences)
    report = evaluate_systems(docs, systems)
    print(report.format_table(reference=args.reference or "tfidf-weighted"))
    if args.out:
        report.to_csv(args.out)


def cmd_sweep(args, settings):
    docs = _documents(args, settings)
    idf = IdfTable.load(args.idf) if args.idf else None
    weights = [float(w) for w in args.weights.split(",")] if args.weights else list(settings.sweep_weights)
    result = sweep_title_weight(docs, weights, idf)
    print(result.format_table())
    if args.out:
        result.table.to_csv(args.out, index=False)
        logger.info(f"Main: Sweep table written to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skurank", description="Rank product description sentences by search relevance.")
    parser.add_argument("--config", help="flat KEY=VALUE file overriding config.py defaults")
    parser.add_argument("--seed", type=int, help="overrides SEED")
    parser.add_argument("--quiet", action="store_true", help="only warnings and errors on the console")

    catalog = argparse.ArgumentParser(add_help=False)
    catalog.add_argument("--catalog", required=True, help="JSON Lines catalog")
    catalog.add_argument("--mode", choices=[REFERENCE_TITLE_ONLY, REFERENCE_TITLE_PLUS_QUERIES],
                         help="reference summary: title (Model 1) or title plus top queries (Model 2)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic labeled catalog")
    p.add_argument("--out", required=True)
    p.add_argument("--num-docs", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[catalog], help="validate a catalog and report statistics")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-vocab", parents=[catalog], help="build the token vocabulary")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("build-idf", parents=[catalog], help="build the document-frequency table")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_idf)

    p = sub.add_parser("make-oracle", parents=[catalog], help="build candidate extract sets")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_make_oracle)

    p = sub.add_parser("train", parents=[catalog], help="train the sentence ranker")
    p.add_argument("--vocab", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--valid-catalog", help="labeled catalog for per-epoch precision@3")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", parents=[catalog], help="rank sentences with a trained model")
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("baseline", parents=[catalog], help="rank sentences with a tf-idf baseline")
    p.add_argument("--idf")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline-mode", choices=["unweighted", "weighted", "filtered"])
    p.add_argument("--weight", type=float)
    p.add_argument("--top-k", type=int)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", parents=[catalog], help="precision@k of models and baselines")
    p.add_argument("--idf")
    p.add_argument("--vocab")
    p.add_argument("--model", action="append", help="name=checkpoint, repeatable")
    p.add_argument("--reference", help="system the deltas are computed against")
    p.add_argument("--out", help="CSV report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[catalog], help="grid search the weighted baseline's title weight")
    p.add_argument("--idf")
    p.add_argument("--weights", help="comma separated, default SWEEP_WEIGHTS")
    p.add_argument("--out", help="CSV table path")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        set_console_level(logging.WARNING)
    try:
        settings = load_settings(args.config, args.seed)
        logger.debug(f"Main: Running {args.command} with {settings}")
        args.func(args, settings)
    except SkuRankError as e:
        logger.error(f"Main: {args.command} failed: {e}")
        logger.debug(traceback.format_exc())
        return 1
    except KeyboardInterrupt:
        logger.info("Main: KeyboardInterrupt received.")
        return 130
    logger.debug(f"Main: {args.command} complete.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
