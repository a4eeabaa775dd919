"""gapaudit command line: validate, attrs, score, gap, balance, bootstrap,
synth, audit, bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
GAPAUDIT_THREADS overrides any parallelism setting.  Every output file embeds
the effective run configuration and tool version.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import click

from . import __version__, attributes, balancer, bench, bootstrap, gapstats, scoring, synthgen
from .attributes import FusionThresholds, Tail
from .corpus import load_corpus
from .errors import GapAuditError, SchemaViolation
from .scoring import CohortView, PairKind, ScoreDistribution


@dataclass(frozen=True)
class RunConfig:
    """Effective settings for a run; defaults are the published constants."""

    manifest: str = ""
    out_dir: str = ""
    races: tuple[str, ...] = ()
    dataset: str = ""
    matcher: str = ""
    hair_label: int | None = None
    bald_hair_ratio: float = 0.02
    bald_confidence: float = 0.97
    ms_strong: float = 0.6
    ms_borderline: float = 0.4
    rek_true_conf: float = 85.0
    rek_borderline_true_conf: float = 55.0
    rek_borderline_false_conf: float = 65.0
    iou_threshold: float = 0.8
    tail_lower: float = 0.25
    tail_upper: float = 0.50
    bins: int = 400
    seed: int = 0
    samples: int = 1000
    skip_bootstrap: bool = False
    max_pairs: int | None = None
    workers: int | None = None

    def thresholds(self) -> FusionThresholds:
        return FusionThresholds(
            bald_hair_ratio=self.bald_hair_ratio,
            bald_confidence=self.bald_confidence,
            ms_strong=self.ms_strong,
            ms_borderline=self.ms_borderline,
            rek_true_conf=self.rek_true_conf,
            rek_borderline_true_conf=self.rek_borderline_true_conf,
            rek_borderline_false_conf=self.rek_borderline_false_conf,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["races"] = list(self.races)
        return d


class StageFailure(Exception):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage={stage}: {cause}")


def _effective_workers(flag: int | None) -> int | None:
    env = os.environ.get("GAPAUDIT_THREADS")
    if env:
        return max(1, int(env))
    return flag


def _tool_block() -> dict:
    return {"name": "gapaudit", "version": __version__}


def _write_json(path, payload: dict, config: RunConfig) -> None:
    doc = {"tool": _tool_block(), "run_config": config.to_dict()}
    doc.update(payload)
    Path(path).write_text(json.dumps(doc, indent=1))


def _header_lines(config: RunConfig) -> list[str]:
    return [f"gapaudit {__version__}",
            "run_config: " + json.dumps(config.to_dict(), sort_keys=True)]


def _write_text(path, body: str, config: RunConfig) -> None:
    head = "".join(f"# {line}\n" for line in _header_lines(config))
    Path(path).write_text(head + body + "\n")


def _parse_cohort(value: str) -> tuple[str, str]:
    parts = value.split(":")
    if len(parts) != 2 or not parts[0] or parts[1] not in ("Female", "Male"):
        raise click.UsageError(
            f"--cohort must look like Race:Female or Race:Male, got {value!r}")
    return parts[0], parts[1]


_SPLIT_NAMES = ("all", "bald", "not_bald", "facial_hair", "no_facial_hair",
                "lower_tail", "middle", "upper_tail")


def _split_predicates(spec_str: str, labels, tails):
    names = spec_str.split(":")
    if len(names) != 2 or any(n not in _SPLIT_NAMES for n in names):
        raise click.UsageError(
            f"--split must be 'a:b' with names from {_SPLIT_NAMES}, got {spec_str!r}")

    def pred(name):
        if name == "all":
            return lambda i: True
        if name == "bald":
            return lambda i: labels[i].is_bald
        if name == "not_bald":
            return lambda i: not labels[i].is_bald
        if name == "facial_hair":
            return lambda i: labels[i].has_facial_hair
        if name == "no_facial_hair":
            return lambda i: not labels[i].has_facial_hair
        tail = {"lower_tail": Tail.LOWER, "middle": Tail.MIDDLE,
                "upper_tail": Tail.UPPER}[name]
        return lambda i: tails.get(i) == tail

    return pred(names[0]), pred(names[1])


def _labels_csv(path, corpus, labels, config: RunConfig) -> None:
    with open(path, "w") as fh:
        for line in _header_lines(config):
            fh.write(f"# {line}\n")
        fh.write("image_id,is_bald,has_facial_hair,hair_ratio,provenance\n")
        for rec in corpus.records:
            lab = labels[rec.image_id]
            ratio = "" if lab.hair_ratio is None else repr(lab.hair_ratio)
            prov = (f"bald={lab.bald_by.value};"
                    f"facial_hair={lab.facial_hair_by.value};"
                    f"hair_ratio={lab.hair_ratio_by.value}")
            fh.write(f"{rec.image_id},{int(lab.is_bald)},"
                     f"{int(lab.has_facial_hair)},{ratio},{prov}\n")


@click.group()
@click.version_option(__version__, prog_name="gapaudit")
def cli():
    """Audit gender gaps in verification accuracy; build balanced subsets."""


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--hair-label", type=int, default=None,
              help="Treat mask pixels equal to N as hair (label PGMs).")
def validate(manifest, hair_label):
    """Load and validate a corpus, printing a summary."""
    corpus = load_corpus(manifest, hair_label=hair_label)
    cohorts = corpus.cohorts()
    click.echo(f"manifest: {manifest}")
    click.echo(f"images: {len(corpus)}  dim: {corpus.embeddings.dim}")
    click.echo(f"subjects: {len({r.subject_id for r in corpus.records})}")
    masked = sum(1 for r in corpus.records if r.mask_ref is not None)
    click.echo(f"masks: {masked}/{len(corpus)}")
    incomplete = sum(1 for r in corpus.records if r.attrs.missing())
    click.echo(f"records with missing attribute scores: {incomplete}")
    for (race, gender), recs in sorted(cohorts.items()):
        subs = len({r.subject_id for r in recs})
        click.echo(f"  cohort {race}:{gender}  images={len(recs)} subjects={subs}")
    click.echo("ok")


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--out-csv", type=click.Path(), required=True,
              help="Per-image label CSV destination.")
@click.option("--census-json", type=click.Path(), default=None)
@click.option("--census-text", type=click.Path(), default=None)
@click.option("--truth", type=click.Path(), default=None,
              help="Ground-truth CSV (image_id,has_facial_hair) for a confusion report.")
@click.option("--confusion-out", type=click.Path(), default=None)
@click.option("--hair-label", type=int, default=None)
def attrs(manifest, out_csv, census_json, census_text, truth, confusion_out,
          hair_label):
    """Fuse per-image attribute labels and tabulate the cohort census."""
    config = RunConfig(manifest=str(manifest), hair_label=hair_label)
    corpus = load_corpus(manifest, hair_label=hair_label)
    labels = attributes.compute_labels(corpus, config.thresholds())
    _labels_csv(out_csv, corpus, labels, config)
    rows = attributes.census(corpus, labels)
    body = attributes.render_census_text(rows)
    click.echo(body)
    if census_text:
        _write_text(census_text, body, config)
    if census_json:
        _write_json(census_json, {"census": [r.to_dict() for r in rows]}, config)
    if truth:
        truth_map = attributes.read_truth_csv(truth)
        cells = attributes.confusion_report(labels, truth_map, corpus)
        payload = {"confusion": {k: v.to_dict() for k, v in cells.items()}}
        if confusion_out:
            _write_json(confusion_out, payload, config)
        else:
            click.echo(json.dumps(payload["confusion"], indent=1))


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--cohort", required=True, help="Race:Gender, e.g. Caucasian:Female.")
@click.option("--kind", type=click.Choice(["genuine", "impostor"]), required=True)
@click.option("--subset", type=click.Path(), default=None,
              help="Subset CSV (pairs file or one-column image_id list).")
@click.option("--split", "split_str", default=None,
              help="Cross-category pair filter 'a:b', names like bald:not_bald.")
@click.option("--bins", type=int, default=400, show_default=True)
@click.option("--out", "out_csv", type=click.Path(), required=True,
              help="Histogram CSV (bin_low,bin_high,count).")
@click.option("--dist", "dist_json", type=click.Path(), default=None,
              help="Also write the full distribution (moments) as JSON.")
@click.option("--max-pairs", type=int, default=None,
              help="Uniform seeded subsample size for desk-scale runs.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=None)
@click.option("--hair-label", type=int, default=None)
@click.option("--tail-lower", type=float, default=0.25, show_default=True)
@click.option("--tail-upper", type=float, default=0.50, show_default=True)
def score(manifest, cohort, kind, subset, split_str, bins, out_csv, dist_json,
          max_pairs, seed, workers, hair_label, tail_lower, tail_upper):
    """Compute a genuine or impostor score distribution for one cohort."""
    race, gender = _parse_cohort(cohort)
    config = RunConfig(manifest=str(manifest), races=(race,), bins=bins,
                       seed=seed, hair_label=hair_label, max_pairs=max_pairs,
                       tail_lower=tail_lower, tail_upper=tail_upper,
                       workers=workers)
    corpus = load_corpus(manifest, hair_label=hair_label)
    split = None
    if split_str:
        labels = attributes.compute_labels(corpus, config.thresholds())
        tails = attributes.tail_partition(labels, tail_lower, tail_upper)
        split = _split_predicates(split_str, labels, tails)
    subset_ids = None
    if subset:
        subset_ids = frozenset(balancer.read_subset_ids(subset))
    spec = scoring.PairSpec(race=race, gender=gender, kind=PairKind(kind),
                            subset=subset_ids, split=split)
    dist = scoring.score_distribution(
        corpus, spec, bins=bins, workers=_effective_workers(workers),
        max_pairs=max_pairs, seed=seed)
    dist.write_hist_csv(out_csv, header_lines=_header_lines(config))
    if dist_json:
        _write_json(dist_json, {
            "cohort": {"race": race, "gender": gender},
            "kind": kind,
            "distribution": dist.to_dict(),
        }, config)
    click.echo(f"{kind} pairs: {dist.n}")
    if dist.n:
        click.echo(f"mean: {dist.mean:.6f}  std: {dist.std:.6f}")


def _read_dist(path) -> ScoreDistribution:
    doc = json.loads(Path(path).read_text())
    if "distribution" not in doc:
        raise SchemaViolation(f"{path}: no distribution block")
    return ScoreDistribution.from_dict(doc["distribution"])


@cli.command()
@click.option("--before-female-impostor", "bfi", type=click.Path(), required=True)
@click.option("--before-male-impostor", "bmi", type=click.Path(), required=True)
@click.option("--before-female-genuine", "bfg", type=click.Path(), required=True)
@click.option("--before-male-genuine", "bmg", type=click.Path(), required=True)
@click.option("--after-female-impostor", "afi", type=click.Path(), required=True)
@click.option("--after-male-impostor", "ami", type=click.Path(), required=True)
@click.option("--after-female-genuine", "afg", type=click.Path(), required=True)
@click.option("--after-male-genuine", "amg", type=click.Path(), required=True)
@click.option("--dataset", default="", help="Context label for the report.")
@click.option("--matcher", default="", help="Context label for the report.")
@click.option("--race", default="")
@click.option("--out-json", type=click.Path(), default=None)
@click.option("--out-text", type=click.Path(), default=None)
def gap(bfi, bmi, bfg, bmg, afi, ami, afg, amg, dataset, matcher, race,
        out_json, out_text):
    """d-prime gap report from eight distribution JSON files."""
    config = RunConfig(dataset=dataset, matcher=matcher,
                       races=(race,) if race else ())
    before = {("Female", PairKind.IMPOSTOR): _read_dist(bfi),
              ("Male", PairKind.IMPOSTOR): _read_dist(bmi),
              ("Female", PairKind.GENUINE): _read_dist(bfg),
              ("Male", PairKind.GENUINE): _read_dist(bmg)}
    after = {("Female", PairKind.IMPOSTOR): _read_dist(afi),
             ("Male", PairKind.IMPOSTOR): _read_dist(ami),
             ("Female", PairKind.GENUINE): _read_dist(afg),
             ("Male", PairKind.GENUINE): _read_dist(amg)}
    report = gapstats.gap_report(before, after, dataset=dataset,
                                 matcher=matcher, race=race)
    body = gapstats.render_gap_text([report])
    click.echo(body)
    if out_json:
        _write_json(out_json, {"gap": report.to_dict()}, config)
    if out_text:
        _write_text(out_text, body, config)


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--race", default=None, help="Restrict to one race (default: all).")
@click.option("--threshold", type=float, default=0.8, show_default=True)
@click.option("--out", "out_csv", type=click.Path(), required=True)
@click.option("--audit", "audit_csv", type=click.Path(), default=None,
              help="Exclusion audit CSV destination.")
@click.option("--hair-label", type=int, default=None)
def balance(manifest, race, threshold, out_csv, audit_csv, hair_label):
    """Construct the hairstyle-balanced subset."""
    config = RunConfig(manifest=str(manifest), iou_threshold=threshold,
                       races=(race,) if race else (), hair_label=hair_label)
    corpus = load_corpus(manifest, hair_label=hair_label)
    labels = attributes.compute_labels(corpus, config.thresholds())
    subset = balancer.balance(corpus, labels, threshold=threshold,
                              races=[race] if race else None)
    balancer.emit_subset(subset, out_csv, audit_path=audit_csv,
                         header_lines=_header_lines(config))
    click.echo(f"pairs: {len(subset.pairs)}")
    click.echo(f"excluded: {len(subset.excluded)}  "
               f"unmatched males: {len(subset.unmatched_males)}")


def _subset_gender_ids(subset_pairs, corpus):
    ids = {"Female": set(), "Male": set()}
    for f, m, _ in subset_pairs:
        ids["Female"].add(f)
        ids["Male"].add(m)
    return ids


def _balanced_dprimes(corpus, race, gender_ids, bins, workers):
    dists = {}
    for gender in ("Female", "Male"):
        view = CohortView(corpus, race, gender)
        pos = view.positions_for(gender_ids[gender])
        for kind in (PairKind.IMPOSTOR, PairKind.GENUINE):
            dists[(gender, kind)] = view.distribution(kind, positions=pos,
                                                      bins=bins, workers=workers)
    return {
        PairKind.IMPOSTOR: gapstats.dprime(dists[("Female", PairKind.IMPOSTOR)],
                                           dists[("Male", PairKind.IMPOSTOR)]),
        PairKind.GENUINE: gapstats.dprime(dists[("Female", PairKind.GENUINE)],
                                          dists[("Male", PairKind.GENUINE)]),
    }


def _subset_counts(gender_ids, corpus):
    counts = {}
    for gender, ids in gender_ids.items():
        subjects = {corpus.by_id[i].subject_id for i in ids}
        counts[gender] = (len(subjects), len(ids))
    return counts


@cli.command(name="bootstrap")
@click.argument("manifest", type=click.Path())
@click.option("--race", required=True)
@click.option("--subset", type=click.Path(), default=None,
              help="Balanced subset CSV; supplies target counts and balanced d-primes.")
@click.option("--counts", default=None,
              help="f_subjects,f_images,m_subjects,m_images (overrides --subset counts).")
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--bins", type=int, default=400, show_default=True)
@click.option("--workers", type=int, default=None)
@click.option("--out", "out_json", type=click.Path(), required=True)
@click.option("--out-text", type=click.Path(), default=None)
@click.option("--hair-label", type=int, default=None)
def bootstrap_cmd(manifest, race, subset, counts, samples, seed, bins, workers,
                  out_json, out_text, hair_label):
    """Random-subset confidence analysis for the balanced d-primes."""
    config = RunConfig(manifest=str(manifest), races=(race,), seed=seed,
                       samples=samples, bins=bins, hair_label=hair_label,
                       workers=workers)
    corpus = load_corpus(manifest, hair_label=hair_label)
    workers = _effective_workers(workers)
    balanced = None
    target_counts = None
    if subset:
        loaded = balancer.load_subset(subset)
        gender_ids = _subset_gender_ids(loaded.pairs, corpus)
        target_counts = _subset_counts(gender_ids, corpus)
        balanced = _balanced_dprimes(corpus, race, gender_ids, bins, workers)
    if counts:
        parts = counts.split(",")
        if len(parts) != 4:
            raise click.UsageError("--counts needs four integers")
        vals = [int(p) for p in parts]
        target_counts = {"Female": (vals[0], vals[1]), "Male": (vals[2], vals[3])}
    if target_counts is None:
        raise click.UsageError("provide --subset or --counts")
    report = bootstrap.bootstrap_gap(corpus, race, target_counts,
                                     samples=samples, seed=seed,
                                     balanced=balanced, bins=bins,
                                     workers=workers)
    body = bootstrap.render_bootstrap_text(report)
    click.echo(body)
    _write_json(out_json, {"bootstrap": report.to_dict()}, config)
    if out_text:
        _write_text(out_text, body, config)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Generator config JSON.")
@click.option("--preset", type=click.Choice(["paper"]), default=None,
              help="Use the frozen paper-shaped generator config.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def synth(config_path, preset, seed, out_dir):
    """Generate a synthetic corpus (manifest, blob, masks)."""
    if config_path:
        gen_cfg = synthgen.load_config(config_path)
    elif preset == "paper":
        gen_cfg = synthgen.default_paper_config()
    else:
        raise click.UsageError("provide --config or --preset paper")
    if seed is not None:
        gen_cfg = replace(gen_cfg, seed=seed)
        gen_cfg.validate()
    manifest = synthgen.generate(gen_cfg, out_dir)
    click.echo(str(manifest))


def _load_flat_config(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise SchemaViolation("run config must be a flat JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise SchemaViolation(f"unknown run config keys: {sorted(unknown)}")
    if "races" in doc:
        doc["races"] = tuple(doc["races"])
    return doc


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Run config JSON (flat keys mirroring flags; flags win).")
@click.option("--races", multiple=True, help="Races to audit (default: all present).")
@click.option("--dataset", default="", help="Context label for reports.")
@click.option("--matcher", default="", help="Context label for reports.")
@click.option("--threshold", "iou_threshold", type=float, default=0.8,
              show_default=True)
@click.option("--bins", type=int, default=400, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--skip-bootstrap", is_flag=True, default=False)
@click.option("--max-pairs", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--hair-label", type=int, default=None)
@click.pass_context
def audit(ctx, manifest, out_dir, config_path, races, dataset, matcher,
          iou_threshold, bins, seed, samples, skip_bootstrap, max_pairs,
          workers, hair_label):
    """One-shot pipeline: attrs, census, distributions, balance, gap, bootstrap."""
    file_cfg = _load_flat_config(config_path) if config_path else {}
    flag_cfg = {
        "races": tuple(races), "dataset": dataset, "matcher": matcher,
        "iou_threshold": iou_threshold, "bins": bins, "seed": seed,
        "samples": samples, "skip_bootstrap": skip_bootstrap,
        "max_pairs": max_pairs, "workers": workers, "hair_label": hair_label,
    }
    explicit = {}
    for key, value in flag_cfg.items():
        source = ctx.get_parameter_source(key)
        if source is not None and source.name != "DEFAULT":
            explicit[key] = value
    merged = {**file_cfg, **explicit,
              "manifest": str(manifest), "out_dir": str(out_dir)}
    config = replace(RunConfig(), **merged)
    run_audit(config)


def run_audit(config: RunConfig) -> dict:
    """Execute the audit pipeline; returns the bundle manifest dict."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    completed: list[str] = []
    produced: list[str] = []
    workers = _effective_workers(config.workers)

    def emit_manifest():
        doc = {"tool": _tool_block(), "run_config": config.to_dict(),
               "completed_stages": completed, "files": sorted(produced)}
        (out_dir / "MANIFEST.json").write_text(json.dumps(doc, indent=1))
        return doc

    def track(name: str) -> Path:
        produced.append(name)
        return out_dir / name

    def stage(name, fn):
        try:
            result = fn()
        except GapAuditError as exc:
            emit_manifest()
            raise StageFailure(name, exc) from exc
        completed.append(name)
        return result

    corpus = stage("load", lambda: load_corpus(config.manifest,
                                               hair_label=config.hair_label))
    labels = stage("attrs", lambda: attributes.compute_labels(
        corpus, config.thresholds()))
    _labels_csv(track("attrs.csv"), corpus, labels, config)

    def run_census():
        rows = attributes.census(corpus, labels)
        _write_json(track("census.json"),
                    {"census": [r.to_dict() for r in rows]}, config)
        _write_text(track("census.txt"),
                    attributes.render_census_text(rows), config)
        return rows

    stage("census", run_census)

    races = list(config.races) if config.races else corpus.races()
    for race in races:
        tag = race.lower()
        views = {g: CohortView(corpus, race, g) for g in ("Female", "Male")}

        def dists_for(positions_by_gender, stage_name):
            dists = {}
            for gender, view in views.items():
                pos = positions_by_gender.get(gender) if positions_by_gender else None
                for kind in (PairKind.IMPOSTOR, PairKind.GENUINE):
                    d = view.distribution(kind, positions=pos, bins=config.bins,
                                          workers=workers,
                                          max_pairs=config.max_pairs,
                                          seed=config.seed)
                    dists[(gender, kind)] = d
                    base = f"{stage_name}_{gender.lower()}_{kind.value}_{tag}"
                    d.write_hist_csv(track(f"hist_{base}.csv"),
                                     header_lines=_header_lines(config))
                    _write_json(track(f"dist_{base}.json"), {
                        "cohort": {"race": race, "gender": gender},
                        "kind": kind.value, "stage": stage_name,
                        "distribution": d.to_dict(),
                    }, config)
            return dists

        before = stage(f"before_distributions[{race}]",
                       lambda: dists_for(None, "before"))

        def run_balance():
            subset = balancer.balance(corpus, labels,
                                      threshold=config.iou_threshold,
                                      races=[race])
            balancer.emit_subset(subset, track(f"subset_{tag}.csv"),
                                 audit_path=track(f"exclusions_{tag}.csv"),
                                 header_lines=_header_lines(config))
            return subset

        subset = stage(f"balance[{race}]", run_balance)
        gender_ids = _subset_gender_ids(subset.pairs, corpus)
        positions = {g: views[g].positions_for(gender_ids[g])
                     for g in ("Female", "Male")}
        after = stage(f"after_distributions[{race}]",
                      lambda: dists_for(positions, "after"))

        def run_gap():
            report = gapstats.gap_report(before, after, dataset=config.dataset,
                                         matcher=config.matcher, race=race)
            _write_json(track(f"gap_{tag}.json"), {"gap": report.to_dict()},
                        config)
            _write_text(track(f"gap_{tag}.txt"),
                        gapstats.render_gap_text([report]), config)
            return report

        report = stage(f"gap[{race}]", run_gap)

        if not config.skip_bootstrap:
            def run_bootstrap():
                target_counts = _subset_counts(gender_ids, corpus)
                balanced = {PairKind.IMPOSTOR: report.impostor_dprime_after,
                            PairKind.GENUINE: report.genuine_dprime_after}
                boot = bootstrap.bootstrap_gap(
                    corpus, race, target_counts, samples=config.samples,
                    seed=config.seed, balanced=balanced, bins=config.bins,
                    workers=workers)
                _write_json(track(f"bootstrap_{tag}.json"),
                            {"bootstrap": boot.to_dict()}, config)
                _write_text(track(f"bootstrap_{tag}.txt"),
                            bootstrap.render_bootstrap_text(boot), config)
                return boot

            stage(f"bootstrap[{race}]", run_bootstrap)

    produced.append("MANIFEST.json")
    return emit_manifest()


@cli.command(name="bench")
@click.option("--pairs", type=float, default=1e8, show_default=True,
              help="Cosine similarity count for the scoring workload.")
@click.option("--dim", type=int, default=512, show_default=True)
@click.option("--bins", type=int, default=400, show_default=True)
@click.option("--masks", type=int, default=4096, show_default=True)
@click.option("--sweeps", type=int, default=64, show_default=True)
@click.option("--backend", type=click.Choice(["both", "py", "ext"]),
              default="both", show_default=True)
@click.option("--workers", type=int, default=None)
@click.option("--out-json", type=click.Path(), default=None)
def bench_cmd(pairs, dim, bins, masks, sweeps, backend, workers, out_json):
    """Benchmark the hot kernels on both backends."""
    from . import kernels
    if backend == "both":
        backends = kernels.available_backends()
    else:
        backends = [backend]
    results = bench.run_bench(pairs=int(pairs), dim=dim, bins=bins, masks=masks,
                              sweeps=sweeps, backends=backends,
                              workers=_effective_workers(workers))
    click.echo(bench.render_bench_text(results))
    if out_json:
        doc = {"tool": _tool_block(),
               "results": [r.to_dict() for r in results]}
        Path(out_json).write_text(json.dumps(doc, indent=1))


def main(argv: list[str] | None = None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(1)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        sys.exit(1)
    except StageFailure as exc:
        click.echo(f"error [{exc.stage}]: {exc.cause}", err=True)
        sys.exit(2)
    except GapAuditError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        sys.exit(2)
    except Exception as exc:  # anything else is an internal fault
        click.echo(f"internal error: {exc!r}", err=True)
        sys.exit(3)


if __name__ == "__main__":
    main()
