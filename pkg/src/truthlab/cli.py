"""Command-line front door.

Subcommands: `gen` (instance generation), `verify` (property suites),
`classify` (shape / box reports), `adversary` (full witness pipeline).
Reports are JSON plus flat CSV; report-producing commands also render
matplotlib figures into the output directory (disable with --no-plots).

Exit codes: 0 pass, 1 substantive negative finding, 2 usage/config
error, 3 internal or oracle error.
"""

import sys
import time
from fractions import Fraction
from pathlib import Path

import click

from . import adversary as adv
from . import boundary, geometry, truthcheck, viz
from .core import Star, parse_instance, serialize_instance
from .errors import ConfigError, ParseError, TruthLabError
from .mechanisms import oracle as bind_oracle
from .mechanisms import parse_mechanism
from .reportio import manifest_reference, write_csv, write_json, write_manifest
from .values import format_rational, parse_rational


class RationalType(click.ParamType):
    name = "rational"

    def convert(self, value, param, ctx):
        if isinstance(value, Fraction):
            return value
        try:
            return parse_rational(str(value))
        except ParseError as exc:
            self.fail(str(exc), param, ctx)


RATIONAL = RationalType()


def _load_mechanism(path):
    return parse_mechanism(Path(path).read_text())


def _load_instance(path):
    return parse_instance(Path(path).read_text())


def _ints(text):
    return [int(x) for x in str(text).replace(",", " ").split()]


@click.group()
def main():
    """Truthful-scheduling laboratory."""


@main.command()
@click.option("--n", type=int, required=True, help="machine count (>= 2)")
@click.option("--ell", type=int, default=32, show_default=True, help="edges per machine pair")
@click.option("--eps", type=RATIONAL, default="1/20", show_default=True)
@click.option("--xi", type=RATIONAL, default="1/4", show_default=True)
@click.option("--nu", type=RATIONAL, default="1/4096", show_default=True)
@click.option("--q", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default="truthlab-out", show_default=True)
def gen(n, ell, eps, xi, nu, q, seed, out):
    """Sample a random multi-clique instance and write it with a manifest."""
    started = time.time()
    config = adv.AdversaryConfig(n=n, eps=eps, xi=xi, nu=nu, ell=ell, q=q, seed=seed)
    warnings = config.validate()
    instance = adv.sample_multi_clique(config)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    inst_path = out_dir / "instance.json"
    inst_path.write_text(serialize_instance(instance))
    write_manifest(out_dir, "gen", config.to_doc(), seed, [inst_path.name], started)
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(f"wrote {inst_path}")


@main.command()
@click.argument("mechanism", type=click.Path(exists=True))
@click.argument("instance", type=click.Path(exists=True))
@click.option("--suite", type=click.Choice(["wmon", "young", "slope", "lipschitz", "alphas"]),
              required=True)
@click.option("--trials", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--root", type=int, default=0, show_default=True,
              help="probe-side machine for the threshold suites")
@click.option("--tol", type=RATIONAL, default="1/4294967296", show_default=True)
@click.option("--jobs", type=int, default=1, envvar="TRUTHLAB_JOBS", show_default=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
@click.option("--out", type=click.Path(), default="truthlab-out", show_default=True)
@click.pass_context
def verify(ctx, mechanism, instance, suite, trials, seed, root, tol, jobs, plots, out):
    """Run one verification suite; exit 1 when it finds a violation."""
    started = time.time()
    spec = _load_mechanism(mechanism)
    inst = _load_instance(instance)
    oracle = bind_oracle(spec)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    config_doc = {"suite": suite, "trials": trials, "seed": seed, "root": root,
                  "tol": format_rational(tol), "mechanism": Path(mechanism).name,
                  "instance": Path(instance).name}
    doc = {"suite": suite, **manifest_reference(config_doc)}

    if suite == "wmon":
        sampler = truthcheck.SamplerConfig(n=inst.n, m=len(inst.edges), seed=seed,
                                           base_instance=inst)
        report = truthcheck.wmon_sweep(oracle, sampler, trials)
        doc.update(report.to_doc())
        passed = report.passed
        outputs.append(write_csv(
            out_dir / "wmon-violations.csv",
            ["machine", "sum"],
            [[v.machine, format_rational(v.total)] for v in report.violations],
        ))
    else:
        passed, doc, figure_samples = _threshold_suite(
            suite, oracle, inst, root, tol, doc, out_dir, outputs
        )
        if plots and figure_samples:
            outputs.append(viz.render_threshold_curves(
                figure_samples, inst.n, out_dir / f"{suite}-thresholds.png"))

    doc["passed"] = passed
    outputs.append(write_json(doc, out_dir / f"verify-{suite}.json"))
    write_manifest(out_dir, f"verify:{suite}", config_doc, seed,
                   [p.name for p in outputs], started)
    ctx.exit(0 if passed else 1)


def _threshold_suite(suite, oracle, inst, root, tol, doc, out_dir, outputs):
    """Shared body for the probing suites; returns (passed, doc, curve samples)."""
    edges = [e for e in inst.edges if e.a != e.b and root in e.support()]
    if not edges:
        raise ConfigError(f"no probe-able tasks incident to machine {root}")
    samples_by_edge = {}
    rows = []
    passed = True

    if suite == "young":
        results = []
        for e in edges:
            probe_fwd = boundary.BoundaryProbe(oracle, inst, e.id, root, tol)
            probe_rev = boundary.BoundaryProbe(oracle, inst, e.id, e.other(root), tol)
            f = boundary.probe_function(probe_fwd, "lo")
            g = boundary.probe_function(probe_rev, "lo")
            for a in (Fraction(1, 2), Fraction(1)):
                res = boundary.young_check(f, g, a, Fraction(1, 32))
                passed = passed and res["passed"]
                results.append({"edge": e.id, "a": format_rational(a),
                                "lhs": format_rational(res["lhs"]),
                                "passed": res["passed"]})
                rows.append([e.id, format_rational(a), format_rational(res["lhs"]),
                             res["passed"]])
            samples_by_edge[e.id] = [
                (x, f(x)) for x in [Fraction(k, 8) for k in range(0, 9)]
            ]
        doc["checks"] = results
        outputs.append(write_csv(out_dir / "young.csv",
                                 ["edge", "a", "lhs", "passed"], rows))
    elif suite == "slope":
        results = []
        xs = [Fraction(k, 8) for k in range(1, 9)]
        for e in edges:
            probe = boundary.BoundaryProbe(oracle, inst, e.id, root, tol)
            res = boundary.bounded_slope_check(probe, xs)
            passed = passed and res["passed"]
            results.append({
                "edge": e.id,
                "flags": [format_rational(x) for x, _ in res["flags"]],
                "passed": res["passed"],
            })
            samples_by_edge[e.id] = [(x, (lo + hi) / 2) for x, lo, hi in res["samples"]]
            rows.extend([[e.id, format_rational(x), format_rational(lo), res["passed"]]
                         for x, lo, hi in res["samples"]])
        doc["checks"] = results
        outputs.append(write_csv(out_dir / "slope.csv",
                                 ["edge", "x", "threshold_lo", "passed"], rows))
    elif suite == "lipschitz":
        results = []
        for e in edges:
            others = [o.id for o in inst.edges
                      if o.id != e.id and o.a != o.b and root in o.support()]
            if not others:
                continue
            deltas = [{tid: inst.task(tid).value_on(root) + Fraction(1, 8)
                       for tid in others}]
            res = boundary.lipschitz_check(oracle, inst, e.id, root, deltas, tol)
            passed = passed and res["passed"]
            results.append({"edge": e.id, "passed": res["passed"]})
            rows.append([e.id, res["passed"]])
        doc["checks"] = results
        outputs.append(write_csv(out_dir / "lipschitz.csv", ["edge", "passed"], rows))
    elif suite == "alphas":
        probe_ids = [e.id for e in edges
                     if 0 < e.value_on(e.other(root)) <= 1]
        if not probe_ids:
            raise ConfigError("no tasks with leaf value in (0, 1] to probe")
        res = boundary.alpha_bounds_check(oracle, inst, root, probe_ids, tol)
        passed = res["passed"]
        doc["checks"] = [
            {"edge": r["edge"], "alpha": format_rational(r["alpha"]),
             "lower_ok": r["lower_ok"], "upper_ok": r["upper_ok"]}
            for r in res["entries"]
        ]
        for r in res["entries"]:
            rows.append([r["edge"], format_rational(r["s"]),
                         format_rational(r["alpha"]), r["lower_ok"], r["upper_ok"]])
            samples_by_edge[r["edge"]] = [(r["s"], r["alpha"])]
        outputs.append(write_csv(out_dir / "alphas.csv",
                                 ["edge", "s", "alpha", "lower_ok", "upper_ok"], rows))
    return passed, doc, samples_by_edge


@main.command()
@click.argument("mechanism", type=click.Path(exists=True))
@click.argument("instance", type=click.Path(exists=True))
@click.option("--pair", type=str, default=None, help="two task ids, e.g. '0,1'")
@click.option("--star", "star_ids", type=str, default=None, help="task ids of a star")
@click.option("--root", type=int, default=None, help="root machine for --star")
@click.option("--delta", type=RATIONAL, default="1/1024", show_default=True)
@click.option("--resolution", type=RATIONAL, default="1/256", show_default=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
@click.option("--out", type=click.Path(), default="truthlab-out", show_default=True)
def classify(mechanism, instance, pair, star_ids, root, delta, resolution, plots, out):
    """Classify a task pair's shape or test a star for box-ness."""
    started = time.time()
    if (pair is None) == (star_ids is None):
        raise click.UsageError("exactly one of --pair / --star is required")
    spec = _load_mechanism(mechanism)
    inst = _load_instance(instance)
    oracle = bind_oracle(spec)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    config_doc = {"pair": pair, "star": star_ids, "root": root,
                  "delta": format_rational(delta),
                  "resolution": format_rational(resolution)}

    if pair is not None:
        ids = _ints(pair)
        if len(ids) != 2:
            raise click.UsageError("--pair needs exactly two task ids")
        report = geometry.classify_pair(oracle, inst, tuple(ids), resolution)
        doc = {
            "kind": "pair-shape",
            "tasks": ids,
            "shape": report["shape"].value,
            "tau1": format_rational(report["tau1"]),
            "tau2": format_rational(report["tau2"]),
            **manifest_reference(config_doc),
        }
        if "cut_value" in report:
            doc["cut_value"] = format_rational(report["cut_value"])
            doc["cut_depth"] = format_rational(report["cut_depth"])
            doc["slope_check_passed"] = report["slope_check"]["passed"]
        if "flip_gap" in report:
            doc["flip_gap"] = format_rational(report["flip_gap"])
        outputs.append(write_json(doc, out_dir / "classify-pair.json"))
        if plots:
            outputs.append(viz.render_pair_regions(
                oracle, inst, tuple(ids), report, out_dir / "pair-regions.png"))
        click.echo(doc["shape"])
    else:
        ids = _ints(star_ids)
        if root is None:
            supports = [inst.task(t).support() for t in ids]
            common = set.intersection(*supports)
            if not common:
                raise click.UsageError("star tasks share no machine; pass --root")
            root = min(common)
        report = geometry.is_box(oracle, inst, Star(root, ids), delta)
        doc = {"kind": "box", **report.to_doc(), **manifest_reference(config_doc)}
        outputs.append(write_json(doc, out_dir / "classify-box.json"))
        click.echo(doc["verdict"])
    write_manifest(out_dir, "classify", config_doc, 0,
                   [p.name for p in outputs], started)


@main.command()
@click.argument("mechanism", type=click.Path(exists=True))
@click.option("--n", type=int, required=True)
@click.option("--ell", type=int, default=32, show_default=True)
@click.option("--eps", type=RATIONAL, default="1/20", show_default=True)
@click.option("--xi", type=RATIONAL, default="1/4", show_default=True)
@click.option("--nu", type=RATIONAL, default="1/4096", show_default=True)
@click.option("--q", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tol", type=RATIONAL, default="1/4294967296", show_default=True)
@click.option("--budget", type=int, default=64, show_default=True)
@click.option("--jobs", type=int, default=1, envvar="TRUTHLAB_JOBS", show_default=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
@click.option("--out", type=click.Path(), default="truthlab-out", show_default=True)
@click.pass_context
def adversary(ctx, mechanism, n, ell, eps, xi, nu, q, seed, tol, budget, jobs,
              plots, out):
    """Run the full witness pipeline; exit 1 with a stage log on failure."""
    started = time.time()
    spec = _load_mechanism(mechanism)
    oracle = bind_oracle(spec)
    config = adv.AdversaryConfig(n=n, eps=eps, xi=xi, nu=nu, ell=ell, q=q,
                                 seed=seed, tolerance=tol, swap_budget=budget,
                                 jobs=jobs)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    result = adv.run_pipeline(oracle, config)
    for w in result.warnings:
        click.echo(f"warning: {w}", err=True)

    stage_doc = {"stages": result.stages, **manifest_reference(config.to_doc())}
    if not result.ok:
        stage_doc["failure"] = result.failure
        stage_doc["failure_stage"] = result.failure_stage
        outputs.append(write_json(stage_doc, out_dir / "stage-log.json"))
        write_manifest(out_dir, "adversary", config.to_doc(), seed,
                       [p.name for p in outputs], started)
        click.echo(f"pipeline failed at {result.failure_stage}: {result.failure}",
                   err=True)
        ctx.exit(1)

    outputs.append(write_json(stage_doc, out_dir / "stage-log.json"))
    report = result.report
    doc = {**report.to_doc(), **manifest_reference(config.to_doc())}
    outputs.append(write_json(doc, out_dir / "witness-report.json"))
    outputs.append(write_csv(
        out_dir / "witness-summary.csv",
        ["root", "z", "delta", "mech_makespan", "opt_makespan", "ratio"],
        [[report.root, format_rational(report.z), format_rational(report.delta),
          format_rational(report.mech_makespan), format_rational(report.opt_makespan),
          format_rational(report.ratio)]],
    ))
    if plots:
        outputs.append(viz.render_witness(report, out_dir / "witness-loads.png"))
    write_manifest(out_dir, "adversary", config.to_doc(), seed,
                   [p.name for p in outputs], started)
    click.echo(f"ratio {float(report.ratio):.4f} "
               f"({format_rational(report.mech_makespan)} / "
               f"{format_rational(report.opt_makespan)})")
    ctx.exit(0)


def run():
    """Entry point with the exit-code contract applied to errors."""
    try:
        code = main.main(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(2)
    except (ParseError, ConfigError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except TruthLabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    sys.exit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    run()
