"""Command-line surface: extract, evaluate, explain, cache, fixtures.

Exit codes: 0 success, 1 run failures occurred, 2 configuration or
dataset errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import benchmark as bm
from .config import RunConfig, build_embedder, build_gateway, build_store, load_config
from .errors import ConfigError, DatasetError, NotFound, StoryAlignError
from .extraction import Extractor
from .mapping import pair_debug_record, score_pair_detail
from .model import Constraint, ConceptualRender, MappingConfig, PairSource, StageLayer


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--store", help="store root directory (overrides config)")
    parser.add_argument("--seed", type=int, help="run seed (overrides config)")
    parser.add_argument("--mock-fixtures", help="use the mock chat provider with this fixture directory")


def _load(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config, store_root=args.store, rng_seed=args.seed)
    if args.mock_fixtures:
        cfg.chat.backend = "mock"
        cfg.chat.fixtures_dir = args.mock_fixtures
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="storyalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="build and persist story representations for a dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True, choices=sorted(bm.DATASET_SCHEMAS))
    p.add_argument("--layers", default="events,temporal", help="comma-separated layer names")
    p.add_argument("--force-refresh", action="store_true")

    p = sub.add_parser("evaluate", help="run an ablation grid over a dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True, choices=sorted(bm.DATASET_SCHEMAS))
    p.add_argument("--specs", required=True, help="JSON file with an array of ablation specs")
    p.add_argument("--out", help="directory for report records (default: store reports dir)")
    p.add_argument("--dry-run", action="store_true", help="validate specs and print planned provider calls")
    p.add_argument("--parallel", type=int, default=1, help="items evaluated concurrently per spec")

    p = sub.add_parser("explain", help="print the mapping trace for one story pair")
    _add_common(p)
    p.add_argument("--base", required=True, help="base story id")
    p.add_argument("--target", required=True, help="target story id")
    p.add_argument("--pair-source", default="units", choices=[s.value for s in PairSource])
    p.add_argument("--level", type=int, default=0, help="conceptual level")
    p.add_argument("--render", default="root_only", choices=[r.value for r in ConceptualRender])
    p.add_argument("--stage-layer", default="stage0", choices=[s.value for s in StageLayer])
    p.add_argument("--constraints", default="", help="comma-separated: evaluative,arc")
    p.add_argument("--beam", type=int, default=3)
    p.add_argument("--json", action="store_true", help="emit the machine-readable record instead")

    p = sub.add_parser("cache", help="inspect or clear the on-disk stores")
    _add_common(p)
    p.add_argument("action", choices=["inspect", "clear"])

    p = sub.add_parser("fixtures", help="turn the run log into mock fixture files")
    _add_common(p)
    p.add_argument("--out", required=True, help="fixture directory to write")
    return parser


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = _load(args)
    store = build_store(cfg)
    gateway = build_gateway(cfg, store)
    extractor = Extractor(gateway, store=store)
    items = bm.load_dataset(args.dataset, args.schema)
    layers = {part.strip() for part in args.layers.split(",") if part.strip()}
    failures: dict[str, int] = {}
    n_stories = 0
    for item in items:
        for story in item.stories:
            n_stories += 1
            try:
                extractor.build_representation(story, layers, force_refresh=args.force_refresh)
            except StoryAlignError as exc:
                task = getattr(exc, "task", "other")
                failures[task] = failures.get(task, 0) + 1
                print(f"FAILED {story.id}: {exc}", file=sys.stderr)
    print(f"processed {n_stories} stories ({gateway.calls} provider calls)")
    if failures:
        for task, count in sorted(failures.items()):
            print(f"failures[{task}] = {count}")
        return 1
    print("failures: none")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    items = bm.load_dataset(args.dataset, args.schema)
    specs = bm.load_spec_file(args.specs, args.schema, seed=cfg.rng_seed)
    if args.dry_run:
        for spec in specs:
            calls = bm.estimate_provider_calls(spec, items)
            flag = "" if spec.paper_setting else "  [non-paper setting]"
            print(f"{spec.label}: ~{calls} provider calls (cold cache){flag}")
        print(f"{len(specs)} specs over {len(items)} items; nothing executed")
        return 0
    store = build_store(cfg)
    gateway = build_gateway(cfg, store)
    extractor = Extractor(gateway, store=store)
    embedder = build_embedder(cfg, store)
    rows = bm.run_grid(
        specs,
        items,
        extractor=extractor,
        embedder=embedder,
        gateway=gateway,
        seed=cfg.rng_seed,
        max_workers=max(1, args.parallel),
    )
    out_dir = Path(args.out) if args.out else store.reports_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    records = bm.rows_to_records(rows)
    with (out_dir / "grid.jsonl").open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    print(bm.format_table(rows))
    print(f"records written to {out_dir / 'grid.jsonl'}")
    return 1 if any(row.error for row in rows) else 0


def cmd_explain(args: argparse.Namespace) -> int:
    cfg = _load(args)
    store = build_store(cfg)
    base_rep = store.load_representation(args.base)
    target_rep = store.load_representation(args.target)
    if base_rep is None:
        raise NotFound(f"no stored representation for {args.base!r}")
    if target_rep is None:
        raise NotFound(f"no stored representation for {args.target!r}")
    constraints = frozenset(
        Constraint(c.strip()) for c in args.constraints.split(",") if c.strip()
    )
    config = MappingConfig(
        pair_source=PairSource(args.pair_source),
        conceptual_level=args.level,
        conceptual_render=ConceptualRender(args.render),
        stage_layer=StageLayer(args.stage_layer),
        constraints=constraints,
        beam_n=args.beam,
        rng_seed=cfg.rng_seed,
    )
    embedder = build_embedder(cfg, store)
    detail = score_pair_detail(base_rep, target_rep, config, embedder)
    if args.json:
        print(json.dumps(pair_debug_record(detail), sort_keys=True))
        return 0
    print(f"pair source: {config.pair_source.value}")
    for name, view in (("base", detail.base_view), ("target", detail.target_view)):
        print(f"{name} elements ({view.story_id}):")
        for element in view.elements:
            extra = "".join(
                f"  [{c.value}={t}]" for c, t in sorted(element.constraint_texts.items(), key=lambda kv: kv[0].value)
            )
            print(f"  [{element.element_id}] {element.text}{extra}")
    if detail.singleton_fallback:
        print("singleton view: no pairs can be formed;")
        print("fell back to the best single element cosine")
    else:
        included = {(q.s1_pair, q.s2_pair) for q in detail.mapping.included_quadruples}
        print(f"quadruples ({len(detail.quadruples)}):")
        for q in sorted(detail.quadruples, key=lambda q: (-q.score, q.s1_pair, q.s2_pair)):
            mark = " *" if (q.s1_pair, q.s2_pair) in included else ""
            print(f"  {q.s1_pair} x {q.s2_pair}  score={q.score:+.4f}{mark}")
        print("winning correspondences:")
        for a, b in sorted(detail.mapping.correspondences.items()):
            print(f"  {detail.base_view.elements[a].text} -> {detail.target_view.elements[b].text}")
    print(f"total score: {detail.score:.6f}")
    return 0


def cmd_cache(args: argparse.Namespace) -> int:
    cfg = _load(args)
    store = build_store(cfg)
    if args.action == "inspect":
        stats = store.cache_stats()
        print(f"representations: {stats['representations']}")
        for model, count in stats["embeddings"].items():
            print(f"embeddings[{model}]: {count}")
        return 0
    store.clear_cache()
    print("cache cleared")
    return 0


def cmd_fixtures(args: argparse.Namespace) -> int:
    cfg = _load(args)
    store = build_store(cfg)
    log_path = store.run_log_path()
    if not log_path.is_file():
        raise NotFound(f"no run log at {log_path}")
    out = Path(args.out)
    written = 0
    with log_path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            tag = record.get("tag") or "untagged"
            path = out / tag
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(record.get("reply", ""), encoding="utf-8")
            written += 1
    print(f"wrote fixtures for {written} log records to {out}")
    return 0


_COMMANDS = {
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "cache": cmd_cache,
    "fixtures": cmd_fixtures,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DatasetError, NotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StoryAlignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
