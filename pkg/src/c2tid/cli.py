"""Command-line entry point: one subcommand per pipeline stage.

Every stage reads its inputs from, and writes its outputs to, the working
directory named in the config, so running the stages one by one produces
the same files as ``pipeline``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from . import corpus as corpus_mod
from .cluster import ClusterTree, assign_numeric_paths, build_tree, read_paths_tsv, write_paths_tsv
from .config import ConfigError, PipelineConfig, scheme_list
from .decode import NgramScorerModel, beam_search, train_ngram
from .evaluation import (
    ALL_SCHEMES,
    EvalReport,
    decode_and_score,
    document_pairs,
    report_config,
    scheme_tokenizer,
    split_queries,
)
from .labels import node_labels, read_docid_tsv, render_baseline_schemes, render_c2t_ids, write_docid_tsv
from .priors import KeywordTable, extract_table
from .smoothing import MockRewriter, ReplayRewriter, smooth_ids, verify_topology
from .synth import QuerySet, synth_corpus
from .trie import DocidTrie, build_trie

BASE_SCHEMES = ("atomic", "codebook", "title", "c2t")


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class Workdir:
    """File layout of one pipeline run."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def ensure(self) -> "Workdir":
        for sub in ("", "docids", "tries", "models"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        return self

    corpus = property(lambda self: self.root / "corpus.jsonl")
    embeddings = property(lambda self: self.root / "embeddings.jsonl")
    tree = property(lambda self: self.root / "tree.json")
    paths = property(lambda self: self.root / "paths.tsv")
    keywords = property(lambda self: self.root / "keywords.jsonl")
    labels = property(lambda self: self.root / "labels.jsonl")
    smoothing = property(lambda self: self.root / "smoothing.json")
    report_json = property(lambda self: self.root / "report.json")
    report_txt = property(lambda self: self.root / "report.txt")

    def docids(self, scheme: str) -> Path:
        return self.root / "docids" / f"{scheme}.tsv"

    def trie(self, scheme: str) -> Path:
        return self.root / "tries" / f"{scheme}.json"

    def model(self, scheme: str, mode: str) -> Path:
        return self.root / "models" / f"{scheme}.{mode}.json"


def _need(path: Path, stage: str, producer: str) -> Path:
    if not path.exists():
        raise StageError(stage, f"missing {path}; run `{producer}` first")
    return path


def _load_corpus(wd: Workdir, stage: str):
    return corpus_mod.ingest_jsonl(_need(wd.corpus, stage, "ingest"))


def _load_tree(wd: Workdir, stage: str):
    tree = ClusterTree.from_json(_need(wd.tree, stage, "cluster").read_text(encoding="utf-8"))
    return tree, read_paths_tsv(_need(wd.paths, stage, "cluster"))


def _load_queries(cfg: PipelineConfig, corpus, stage: str) -> QuerySet:
    path = cfg.resolve(cfg.paths.queries)
    if path is None:
        raise StageError(stage, "config paths.queries is not set")
    if not path.exists():
        raise StageError(stage, f"query file {path} not found")
    return QuerySet.from_jsonl(path, corpus)


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


# -- stages -----------------------------------------------------------------


def stage_ingest(cfg: PipelineConfig, wd: Workdir) -> str:
    src = cfg.resolve(cfg.paths.corpus)
    if src is None:
        raise StageError("ingest", "config paths.corpus is not set")
    corpus = corpus_mod.ingest_jsonl(src)
    corpus_mod.write_jsonl(corpus, wd.corpus)
    if cfg.paths.embeddings:
        emb = corpus_mod.load_embeddings_jsonl(cfg.resolve(cfg.paths.embeddings), corpus)
    else:
        emb = corpus_mod.embed_corpus(corpus, cfg.embed.dim, cfg.seed)
    corpus_mod.write_embeddings_jsonl(emb, wd.embeddings)
    return f"ingested {len(corpus)} documents (dim {emb.dim})"


def stage_cluster(cfg: PipelineConfig, wd: Workdir) -> str:
    corpus = _load_corpus(wd, "cluster")
    emb = corpus_mod.load_embeddings_jsonl(_need(wd.embeddings, "cluster", "ingest"), corpus)
    tree = build_tree(emb, corpus, cfg.params().cluster)
    _write_text(wd.tree, tree.to_json())
    paths = assign_numeric_paths(tree)
    write_paths_tsv(paths, wd.paths)
    return f"tree with {len(tree.nodes)} nodes, {len(tree.leaves())} leaves"


def stage_extract(cfg: PipelineConfig, wd: Workdir) -> str:
    corpus = _load_corpus(wd, "extract")
    table = extract_table(corpus, cfg.extractor())
    table.to_jsonl(wd.keywords)
    return f"keywords for {len(table.per_doc)} documents"


def _render(cfg: PipelineConfig, wd: Workdir, stage: str):
    corpus = _load_corpus(wd, stage)
    tree, paths = _load_tree(wd, stage)
    table = KeywordTable.from_jsonl(_need(wd.keywords, stage, "extract"))
    params = cfg.params()
    labels = node_labels(tree, table, params.label)
    c2t = render_c2t_ids(tree, paths, table, params.label, labels)
    return corpus, tree, labels, c2t, render_baseline_schemes(corpus, paths, c2t)


def stage_forge(cfg: PipelineConfig, wd: Workdir, schemes: Sequence[str] = BASE_SCHEMES) -> str:
    _, _, labels, _, base = _render(cfg, wd, "forge")
    with open(wd.labels, "w", encoding="utf-8") as fh:
        for nid in sorted(labels):
            lab = labels[nid]
            fh.write(json.dumps({"node_id": nid, "label": lab.rendered,
                                 "keywords": list(lab.ranked_keywords)}, ensure_ascii=False) + "\n")
    for scheme in schemes:
        if scheme not in BASE_SCHEMES:
            raise StageError("forge", f"scheme {scheme!r} is produced by `smooth`, not `forge`")
        write_docid_tsv(base.scheme(scheme), wd.docids(scheme))
    return f"docids for {', '.join(schemes)}"


def stage_smooth(cfg: PipelineConfig, wd: Workdir) -> str:
    _, tree, labels, c2t, base = _render(cfg, wd, "smooth")
    params = cfg.params()
    if cfg.paths.replay:
        rw = ReplayRewriter.from_jsonl(cfg.resolve(cfg.paths.replay))
    else:
        rw = MockRewriter()
    rankings = {nid: lab.ranking for nid, lab in labels.items()}
    sm = smooth_ids(c2t, tree, rw, rankings, params.label.intra_sep)
    original = build_trie(base.c2t, scheme_tokenizer("c2t", base.c2t, params))
    smoothed = build_trie(sm.docids, scheme_tokenizer("c2t_smoothed", sm.docids, params))
    report = verify_topology(original, smoothed, sm.spans)
    write_docid_tsv(sm.docids, wd.docids("c2t_smoothed"))
    payload = {
        "topology_ok": report.ok,
        "violations": report.violations,
        "fallback_nodes": list(sm.fallbacks),
        "phrases": {str(n): " ".join(p) for n, p in sorted(sm.phrases.items())},
    }
    _write_text(wd.smoothing, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    if not report.ok:
        raise StageError("smooth", f"smoothing changed the trie topology: {report.violations[0]}")
    return f"smoothed {len(sm.docids)} docids, topology preserved"


def stage_build_trie(cfg: PipelineConfig, wd: Workdir, schemes: Sequence[str]) -> str:
    params = cfg.params()
    for scheme in schemes:
        producer = "smooth" if scheme == "c2t_smoothed" else "forge"
        docids = read_docid_tsv(_need(wd.docids(scheme), "build-trie", producer))
        trie = build_trie(docids, scheme_tokenizer(scheme, docids, params))
        _write_text(wd.trie(scheme), trie.to_json())
    return f"tries for {', '.join(schemes)}"


def _load_trie(wd: Workdir, scheme: str, stage: str) -> DocidTrie:
    return DocidTrie.from_json(_need(wd.trie(scheme), stage, "build-trie").read_text(encoding="utf-8"))


def stage_train(cfg: PipelineConfig, wd: Workdir, schemes: Sequence[str], mode: str) -> str:
    corpus = _load_corpus(wd, "train")
    params = cfg.params()
    pairs = document_pairs(corpus)
    if mode == "supervised":
        train_q, _ = split_queries(_load_queries(cfg, corpus, "train"), cfg.seed, params.test_fraction)
        pairs += list(train_q.entries)
    for scheme in schemes:
        trie = _load_trie(wd, scheme, "train")
        docids = {d: trie.tokenizer.detokenize(s) for d, s in trie.sequences.items()}
        model = train_ngram(pairs, docids, trie.tokenizer, params.alpha, weights=params.weights)
        _write_text(wd.model(scheme, mode), model.to_json())
    return f"{mode} models for {', '.join(schemes)} ({len(pairs)} training pairs)"


def _load_model(wd: Workdir, scheme: str, mode: str, stage: str) -> NgramScorerModel:
    path = _need(wd.model(scheme, mode), stage, f"train --mode {mode}")
    return NgramScorerModel.from_json(path.read_text(encoding="utf-8"))


def stage_decode(cfg: PipelineConfig, wd: Workdir, scheme: str, mode: str, queries: List[str], out) -> str:
    trie = _load_trie(wd, scheme, "decode")
    model = _load_model(wd, scheme, mode, "decode")
    for q in queries:
        res = beam_search(q, model, trie, cfg.decode.beam_width, length_norm=cfg.decode.length_norm)
        out.write(json.dumps(res.to_record(), ensure_ascii=False) + "\n")
    return f"decoded {len(queries)} queries with {scheme}"


def stage_eval(cfg: PipelineConfig, wd: Workdir, schemes: Sequence[str], mode: str) -> EvalReport:
    corpus = _load_corpus(wd, "eval")
    params = cfg.params()
    _, test_q = split_queries(_load_queries(cfg, corpus, "eval"), cfg.seed, params.test_fraction)
    results = {}
    for scheme in schemes:
        trie = _load_trie(wd, scheme, "eval")
        model = _load_model(wd, scheme, mode, "eval")
        results[scheme] = decode_and_score(trie, model, test_q, params.beam_width, params.length_norm)
    report = EvalReport(results, len(test_q), cfg.seed, mode, report_config(params, len(corpus)))
    _write_text(wd.report_json, report.to_json() + "\n")
    _write_text(wd.report_txt, report.to_table())
    return report


def run_pipeline(cfg: PipelineConfig, wd: Workdir, log: Callable[[str], None] = lambda s: None) -> EvalReport:
    schemes = tuple(cfg.eval.schemes)
    mode = cfg.eval.mode
    log(stage_ingest(cfg, wd))
    log(stage_cluster(cfg, wd))
    log(stage_extract(cfg, wd))
    log(stage_forge(cfg, wd))
    if cfg.eval.smooth:
        log(stage_smooth(cfg, wd))
    log(stage_build_trie(cfg, wd, schemes))
    log(stage_train(cfg, wd, schemes, mode))
    return stage_eval(cfg, wd, schemes, mode)


def stage_synth(out_dir: Path, seed: int, n_docs: int, n_topics: int, vocab_size: int, queries_per_doc: int) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus, queries = synth_corpus(seed=seed, n_docs=n_docs, n_topics=n_topics,
                                   vocab_size=vocab_size, queries_per_doc=queries_per_doc)
    corpus_mod.write_jsonl(corpus, out_dir / "corpus.jsonl")
    queries.to_jsonl(out_dir / "queries.jsonl")
    cfg = PipelineConfig()
    cfg.seed = seed
    cfg.paths.corpus = "corpus.jsonl"
    cfg.paths.queries = "queries.jsonl"
    _write_text(out_dir / "config.json", cfg.to_json())
    return f"wrote {len(corpus)} documents and {len(queries)} queries to {out_dir}"


# -- argument parsing -----------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config JSON (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--workdir", type=Path, help="override paths.workdir")

    p = argparse.ArgumentParser(prog="c2tid", description="Cluster-to-text docid pipeline.")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in [
        ("ingest", "validate the corpus and embed it"),
        ("cluster", "build the hierarchical k-means tree and numeric paths"),
        ("extract", "extract per-document keyword priors"),
        ("smooth", "rewrite c2t docids into phrases and check trie topology"),
        ("pipeline", "run every stage and write the evaluation report"),
    ]:
        sub.add_parser(name, parents=[common], help=help_)

    forge = sub.add_parser("forge", parents=[common], help="render docids for the base schemes")
    forge.add_argument("--scheme", default=",".join(BASE_SCHEMES),
                       help="comma-separated subset of " + "|".join(BASE_SCHEMES))

    for name, help_ in [("build-trie", "compile docids into decoding tries"),
                        ("train", "train n-gram scorers"), ("eval", "score held-out queries")]:
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("--scheme", help="comma-separated schemes (default: config eval.schemes)")
        if name != "build-trie":
            sp.add_argument("--mode", choices=("supervised", "zero_shot"), help="default: config eval.mode")

    dec = sub.add_parser("decode", parents=[common], help="rank documents for queries")
    dec.add_argument("--scheme", default="c2t", choices=ALL_SCHEMES)
    dec.add_argument("--mode", choices=("supervised", "zero_shot"))
    src = dec.add_mutually_exclusive_group(required=True)
    src.add_argument("--query", action="append", help="query text (repeatable)")
    src.add_argument("--queries", type=Path, help="JSONL file with a 'query' field per line")
    dec.add_argument("--out", type=Path, help="write JSONL here instead of stdout")

    syn = sub.add_parser("synth", help="write a synthetic corpus, queries and a matching config")
    syn.add_argument("--out", type=Path, required=True)
    syn.add_argument("--seed", type=int, default=7)
    syn.add_argument("--n-docs", type=int, default=500)
    syn.add_argument("--n-topics", type=int, default=10)
    syn.add_argument("--vocab-size", type=int, default=2000)
    syn.add_argument("--queries-per-doc", type=int, default=5)
    return p


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    cfg = cfg.with_seed(args.seed)
    if args.workdir is not None:
        cfg.paths.workdir = str(args.workdir.resolve())
    return cfg


def _read_query_file(path: Path) -> List[str]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(str(json.loads(line)["query"]))
            except (json.JSONDecodeError, KeyError, TypeError):
                raise StageError("decode", f"{path}:{lineno}: expected a JSON object with 'query'") from None
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    stage = args.command
    try:
        if stage == "synth":
            print(stage_synth(args.out, args.seed, args.n_docs, args.n_topics, args.vocab_size, args.queries_per_doc))
            return 0
        cfg = _config(args)
        wd = Workdir(cfg.workdir).ensure()
        scheme_arg = getattr(args, "scheme", None)
        schemes = scheme_list(scheme_arg) if scheme_arg else tuple(cfg.eval.schemes)
        mode = getattr(args, "mode", None) or cfg.eval.mode
        log = lambda msg: print(msg, file=sys.stderr)  # noqa: E731

        if stage == "ingest":
            log(stage_ingest(cfg, wd))
        elif stage == "cluster":
            log(stage_cluster(cfg, wd))
        elif stage == "extract":
            log(stage_extract(cfg, wd))
        elif stage == "forge":
            log(stage_forge(cfg, wd, schemes))
        elif stage == "smooth":
            log(stage_smooth(cfg, wd))
        elif stage == "build-trie":
            log(stage_build_trie(cfg, wd, schemes))
        elif stage == "train":
            log(stage_train(cfg, wd, schemes, mode))
        elif stage == "decode":
            queries = args.query if args.query else _read_query_file(args.queries)
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    log(stage_decode(cfg, wd, args.scheme, mode, queries, fh))
            else:
                log(stage_decode(cfg, wd, args.scheme, mode, queries, sys.stdout))
        elif stage == "eval":
            sys.stdout.write(stage_eval(cfg, wd, schemes, mode).to_table())
        elif stage == "pipeline":
            sys.stdout.write(run_pipeline(cfg, wd, log).to_table())
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: [{stage}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
