"""Command-line interface.

Subcommands: ``fit`` (learn the model bundle from data), ``explain`` (one
query), ``compare`` (all methods side by side), ``sweep`` (trade-off
frontier CSV), ``sensitivity`` (coefficient-noise trials), ``validate``
(self-check suites). Exit codes: 0 success, 1 infeasible query or failed
validation, 2 configuration or I/O error.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from .data import ColumnMapping, demo_credit_path, design_matrix_csv, load_german_credit
from .errors import DataFormatError, InfeasibleQueryError
from .estimator import CounterfactualExplainer
from .methods import METHODS, Counterfactual
from .solver import SolverConfig
from . import validate as validate_mod


@click.group()
def main():
    """Counterfactual explanations over a linear causal model."""


def _load_explainer(model_path) -> CounterfactualExplainer:
    try:
        with open(model_path, "r", encoding="utf-8") as fh:
            return CounterfactualExplainer.from_json(fh.read())
    except FileNotFoundError as exc:
        raise click.UsageError(f"model bundle not found: {model_path}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise click.UsageError(f"bad model bundle {model_path}: {exc}") from exc


def _parse_factual(explainer: CounterfactualExplainer, pairs) -> np.ndarray:
    names = [f.name for f in explainer.scm_.features]
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--factual expects name=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        if key not in names:
            raise click.UsageError(f"unknown feature {key!r}; expected one of {names}")
        values[key] = _parse_value(key, raw)
    missing = [n for n in names if n not in values]
    if missing:
        raise click.UsageError(f"--factual missing features: {missing}")
    return np.array([values[n] for n in names], dtype=float)


def _parse_value(name: str, raw: str) -> float:
    if name == "gender":
        lowered = raw.strip().lower()
        if lowered in ("male", "female"):
            return {"male": 0.0, "female": 1.0}[lowered]
    try:
        return float(raw)
    except ValueError:
        raise click.UsageError(f"cannot parse value {raw!r} for feature {name!r}") from None


def _parse_target(explainer: CounterfactualExplainer, raw: str) -> int:
    labels = [l.lower() for l in explainer.classifier_.labels]
    lowered = raw.strip().lower()
    if lowered in labels:
        return labels.index(lowered)
    if lowered in ("0", "1"):
        return int(lowered)
    raise click.UsageError(f"target must be 0/1 or one of {list(explainer.classifier_.labels)}")


def _gender_name(value: float) -> str:
    return "female" if value >= 0.5 else "male"


def _row_cells(explainer, x) -> list[str]:
    cells = []
    for f in explainer.scm_.features:
        v = x[f.index]
        if f.categorical:
            cells.append(_gender_name(v))
        elif f.name == "amount":
            cells.append(f"{v:.0f}")
        else:
            cells.append(f"{v:.1f}")
    return cells


def _print_table(explainer, rows, header_extra=()):
    names = [f.name for f in explainer.scm_.features]
    header = ["method"] + names + list(header_extra)
    widths = [len(h) for h in header]
    body = []
    for label, x, extra in rows:
        cells = [label] + _row_cells(explainer, x) + [f"{v:.2f}" if isinstance(v, float) else str(v) for v in extra]
        body.append(cells)
        widths = [max(w, len(c)) for w, c in zip(widths, cells)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    click.echo(fmt.format(*header))
    for cells in body:
        click.echo(fmt.format(*cells))


def _emit(text: str, out):
    if out and out != "-":
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=not text.endswith("\n"))


def _solver_from(seed: int | None) -> SolverConfig:
    return SolverConfig(seed=seed or 0)


seed_option = click.option(
    "--seed", type=int, default=None, envvar="RECOURSE_KIT_SEED",
    help="Random seed (falls back to RECOURSE_KIT_SEED).",
)


@main.command()
@click.option("--data", "data_path", default=None, help="Credit data file (21-field records); defaults to the bundled demo file.")
@click.option("--mapping", "mapping_path", default=None, help="Column-mapping JSON/TOML file.")
@click.option("--out", "out_path", default="model.json", show_default=True, help="Bundle output path.")
@click.option("--l2", default=1e-4, show_default=True, help="Classifier ridge strength.")
@click.option("--design-csv", default=None, help="Also dump the raw design matrix as CSV.")
@seed_option
def fit(data_path, mapping_path, out_path, l2, design_csv, seed):
    """Fit the causal mechanisms and classifier; write the model bundle."""
    mapping = None
    if mapping_path is not None:
        try:
            mapping = ColumnMapping.from_file(mapping_path)
        except FileNotFoundError as exc:
            raise click.UsageError(f"mapping file not found: {mapping_path}") from exc
        except (json.JSONDecodeError, DataFormatError, TypeError, ValueError) as exc:
            raise click.UsageError(f"bad mapping file {mapping_path}: {exc}") from exc
    path = data_path or demo_credit_path()
    try:
        ds = load_german_credit(path, mapping)
    except FileNotFoundError as exc:
        raise click.UsageError(f"data file not found: {path}") from exc
    except DataFormatError as exc:
        raise click.UsageError(f"cannot parse {path}: {exc}") from exc

    explainer = CounterfactualExplainer(l2=l2, solver=_solver_from(seed)).fit(ds.X, ds.y)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(explainer.to_json())
    if design_csv:
        with open(design_csv, "w", encoding="utf-8") as fh:
            fh.write(design_matrix_csv(ds))

    scm = explainer.scm_
    click.echo(f"fitted on {ds.n_rows} rows -> {out_path}")
    for i, f in enumerate(scm.features):
        if scm.parents[i]:
            terms = " + ".join(
                f"{w:.4g}*{scm.features[p].name}" for p, w in zip(scm.parents[i], scm.weights[i])
            )
            click.echo(f"  {f.name} := {terms} + {scm.intercepts[i]:.4g} + noise(sd={scm.noise_sigma[i]:.4g})")
    clf = explainer.classifier_
    coefs = ", ".join(f"{f.name}={c:.4g}" for f, c in zip(scm.features, clf.coef_))
    click.echo(f"  classifier: {coefs}, bias={clf.intercept_:.4g}")
    acc = float((clf.predict(ds.X) == ds.y).mean())
    click.echo(f"  training accuracy {acc:.3f} (high-risk rate {ds.y.mean():.3f})")


def _result_payload(explainer, cf: Counterfactual) -> dict:
    doc = cf.to_dict()
    doc["label"] = explainer.classifier_.label_name(explainer.classifier_.classify(cf.x_cf))
    return doc


@main.command()
@click.option("--model", "model_path", required=True, help="Model bundle from `fit`.")
@click.option("--factual", "factual_pairs", multiple=True, required=True, help="name=value, repeatable.")
@click.option("--target", required=True, help="Desired class (name or 0/1).")
@click.option("--method", type=click.Choice(METHODS), default="blended", show_default=True)
@click.option("--lambda", "lam", default=1.0, show_default=True, help="Latent-distance weight (blended).")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table", show_default=True)
@click.option("--trace", "trace_path", default=None, help="Write solver trace CSV here.")
@click.option("--out", "out_path", default=None, help="Write output here instead of stdout.")
@seed_option
def explain(model_path, factual_pairs, target, method, lam, fmt, trace_path, out_path, seed):
    """Explain one factual with one method."""
    if lam < 0:
        raise click.UsageError("--lambda must be nonnegative")
    explainer = _load_explainer(model_path)
    explainer.solver = _solver_from(seed)
    x = _parse_factual(explainer, factual_pairs)
    y_target = _parse_target(explainer, target)
    try:
        cf = explainer.explain(x, y_target, method=method, lam=lam)
    except InfeasibleQueryError as exc:
        raise click.ClickException(str(exc)) from exc
    if trace_path and cf.trace is not None:
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write(cf.trace.to_csv())
    if fmt == "json":
        _emit(json.dumps(_result_payload(explainer, cf), indent=2), out_path)
        return
    label0 = explainer.classifier_.label_name(explainer.classifier_.classify(x))
    rows = [
        (f"original ({label0})", x, []),
        (f"{method} (lam={lam:g})" if method == "blended" else method, cf.x_cf, []),
    ]
    _print_table(explainer, rows)
    click.echo(f"d_x={cf.d_x:.4f} d_u={cf.d_u:.4f} converged={cf.converged} iterations={cf.iterations}")
    if cf.intervention is not None:
        names = {f.index: f.name for f in explainer.scm_.features}
        acts = ", ".join(f"{names[i]}:={v:.1f}" for i, v in cf.intervention.items())
        click.echo(f"intervention: {acts}")


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--factual", "factual_pairs", multiple=True, required=True)
@click.option("--target", required=True)
@click.option("--lambda", "lams", multiple=True, type=float, default=(1.0, 1.2), show_default=True,
              help="Blended trade-off weights, repeatable.")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table", show_default=True)
@click.option("--out", "out_path", default=None)
@seed_option
def compare(model_path, factual_pairs, target, lams, fmt, out_path, seed):
    """Run every method on one factual; includes a monthly-payment column."""
    explainer = _load_explainer(model_path)
    explainer.solver = _solver_from(seed)
    x = _parse_factual(explainer, factual_pairs)
    y_target = _parse_target(explainer, target)

    names = [f.name for f in explainer.scm_.features]
    idx_amount = names.index("amount") if "amount" in names else None
    idx_duration = names.index("duration") if "duration" in names else None

    def monthly(vec):
        if idx_amount is None or idx_duration is None or vec[idx_duration] == 0:
            return float("nan")
        return float(vec[idx_amount] / vec[idx_duration])

    results: list[tuple[str, Counterfactual | None]] = []
    for method in ("wachter", "recourse", "latent"):
        try:
            results.append((method, explainer.explain(x, y_target, method=method)))
        except InfeasibleQueryError:
            results.append((method, None))
    for lam in lams:
        try:
            results.append((f"blended (lam={lam:g})", explainer.explain(x, y_target, method="blended", lam=lam)))
        except InfeasibleQueryError:
            results.append((f"blended (lam={lam:g})", None))

    if fmt == "json":
        doc = {
            "factual": [float(v) for v in x],
            "monthly_payment_factual": monthly(x),
            "results": {
                label: (None if cf is None else {**_result_payload(explainer, cf),
                                                 "monthly_payment": monthly(cf.x_cf)})
                for label, cf in results
            },
        }
        _emit(json.dumps(doc, indent=2), out_path)
        return

    label0 = explainer.classifier_.label_name(explainer.classifier_.classify(x))
    rows = [(f"original ({label0})", x, [monthly(x), "-", "-"])]
    for label, cf in results:
        if cf is None:
            click.echo(f"{label}: infeasible")
            continue
        rows.append((label, cf.x_cf, [monthly(cf.x_cf), f"{cf.d_x:.3f}", f"{cf.d_u:.3f}"]))
    _print_table(explainer, rows, header_extra=("monthly", "d_x", "d_u"))


def _parse_grid(spec: str) -> list[float]:
    if spec.startswith("log:"):
        try:
            _, lo, hi, count = spec.split(":")
            grid = np.geomspace(float(lo), float(hi), int(count))
        except ValueError as exc:
            raise click.UsageError(f"bad log grid {spec!r}; expected log:LO:HI:COUNT") from exc
        return [float(g) for g in grid]
    try:
        values = [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise click.UsageError(f"bad grid {spec!r}") from exc
    if len(set(values)) != len(values):
        raise click.UsageError("grid contains duplicate values")
    if sorted(values) != values:
        raise click.UsageError("grid values must be increasing")
    return values


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--factual", "factual_pairs", multiple=True, required=True)
@click.option("--target", required=True)
@click.option("--grid", default="log:0.01:100:20", show_default=True,
              help="Comma list or log:LO:HI:COUNT.")
@click.option("--out", "out_path", default=None, help="CSV output path (default stdout).")
@seed_option
def sweep(model_path, factual_pairs, target, grid, out_path, seed):
    """Trade-off frontier: one blended solve per weight, emitted as CSV."""
    explainer = _load_explainer(model_path)
    explainer.solver = _solver_from(seed)
    x = _parse_factual(explainer, factual_pairs)
    y_target = _parse_target(explainer, target)
    lambdas = _parse_grid(grid)
    result = explainer.sweep(x, y_target, lambdas)

    names = [f.name for f in explainer.scm_.features]
    lines = ["lambda,d_x,d_u," + ",".join(f"x_cf_{n}" for n in names) + ",status"]
    for p in result.points:
        coords = ",".join(f"{v:.10g}" for v in p.x_cf)
        lines.append(f"{p.lam:.10g},{p.d_x:.10g},{p.d_u:.10g},{coords},ok")
    for lam in result.infeasible:
        lines.append(f"{lam:.10g},,,{',' * (len(names) - 1)},infeasible")
    _emit("\n".join(lines) + "\n", out_path)
    for v in result.violations:
        click.echo(f"monotonicity violation: {v}", err=True)
    if result.violations:
        sys.exit(1)


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--factual", "factual_pairs", multiple=True, required=True)
@click.option("--target", required=True)
@click.option("--lambda", "lam", default=1.2, show_default=True)
@click.option("--noise-sigma", default=5.0, show_default=True, help="Std of the coefficient noise.")
@click.option("--trials", default=10, show_default=True)
@seed_option
def sensitivity(model_path, factual_pairs, target, lam, noise_sigma, trials, seed):
    """Stability of the blended explanation under mechanism-coefficient noise."""
    if trials < 1:
        raise click.UsageError("--trials must be at least 1")
    explainer = _load_explainer(model_path)
    explainer.solver = _solver_from(seed)
    x = _parse_factual(explainer, factual_pairs)
    y_target = _parse_target(explainer, target)
    try:
        results = explainer.sensitivity(
            x, y_target, lam=lam, noise_sigma=noise_sigma, trials=trials, seed=seed or 0
        )
    except InfeasibleQueryError as exc:
        raise click.ClickException(str(exc)) from exc
    rows = [("original", x, [])]
    for t, cf in enumerate(results):
        rows.append((f"trial {t}", cf.x_cf, []))
    _print_table(explainer, rows)


@main.command()
@seed_option
def validate(seed):
    """Run the self-check property suites; exit nonzero on any failure."""
    reports = validate_mod.run_all(seed=seed or 0)
    for rep in reports:
        click.echo(rep.line())
    if not all(r.ok for r in reports):
        sys.exit(1)


if __name__ == "__main__":
    main()
