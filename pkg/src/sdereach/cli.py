"""Command-line interface.

Subcommands:

  classify-linear   spectral reachability verdict for dx = Ax dt + B dW
  synthesize        SOS drift + variant certificate synthesis for a system file
  simulate          hitting-time CDF estimation (CSV + figure)
  decrease-field    one-step decrease-probability field over a grid
  verify            sampled validation of a stored certificate
  demo-divergence   the explicit-scheme divergence demonstration
  poly-parse        convert an infix polynomial string to the JSON term list
  examples          list or export the bundled system files

Exit codes are a stable contract: 0 success (or reachable verdict),
2 usage/schema/precondition errors, 10 not reachable, 11 drift synthesis
infeasible, 12 variant synthesis stalled, 13 verification failure.

Every output directory receives a manifest with the resolved
configuration, seed, and input digests; identical manifests reproduce
byte-identical CSV/JSON outputs. Figures are rendered next to each report
unless --no-plot is given.
"""

from __future__ import annotations

import argparse
import json
import sys as _sys
from pathlib import Path

import numpy as np

from . import __version__, bundled, jsonio, linclass, simulate, sosbuild, verify
from .polyalg import Polynomial
from .sdemodel import SemialgebraicSet
from .sdpsolve import SolveOptions

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_REACHABLE = 10
EXIT_DRIFT_INFEASIBLE = 11
EXIT_VARIANT_STALLED = 12
EXIT_VERIFY_FAILED = 13


class CliError(Exception):
    """Input or precondition problem; maps to exit code 2."""


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise CliError(f"could not parse {what} '{text}': {exc}") from exc


def _parse_box(text: str, n: int) -> list[tuple[float, float]]:
    vals = _parse_floats(text, "box")
    if len(vals) == 1:
        if vals[0] <= 0:
            raise CliError("single-value box must be a positive half-width")
        return [(-vals[0], vals[0])] * n
    if len(vals) == 2 * n:
        box = [(vals[2 * i], vals[2 * i + 1]) for i in range(n)]
        if any(lo >= hi for lo, hi in box):
            raise CliError("box intervals must satisfy lo < hi")
        return box
    raise CliError(
        f"box must be one half-width or {2 * n} comma-separated bounds "
        f"(lo1,hi1,...), got {len(vals)} values"
    )


def _require_target(target, path) -> SemialgebraicSet:
    if target is None:
        raise CliError(f"system file '{path}' has no target set")
    return target


# -- polynomial string parsing ----------------------------------------------------


class _PolyParser:
    """Recursive-descent parser for infix polynomials over x1..xn."""

    def __init__(self, text: str, dimension: int):
        self.text = text
        self.pos = 0
        self.n = dimension

    def parse(self) -> Polynomial:
        poly = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise CliError(f"unexpected input at position {self.pos}: '{self.text[self.pos:]}'")
        return poly

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expr(self) -> Polynomial:
        sign = 1.0
        if self._peek() and self._peek() in "+-":
            sign = -1.0 if self.text[self.pos] == "-" else 1.0
            self.pos += 1
        total = self._term().scale(sign)
        while self._peek() and self._peek() in "+-":
            op = self.text[self.pos]
            self.pos += 1
            term = self._term()
            total = total.add(term if op == "+" else term.neg())
        return total

    def _term(self) -> Polynomial:
        prod = self._factor()
        while True:
            ch = self._peek()
            if ch == "*":
                self.pos += 1
                prod = prod.mul(self._factor())
            elif ch == "(" or ch == "x" or ch.isdigit() or ch == ".":
                prod = prod.mul(self._factor())  # implicit multiplication
            else:
                return prod

    def _factor(self) -> Polynomial:
        base = self._base()
        if self._peek() == "^":
            self.pos += 1
            self._skip_ws()
            start = self.pos
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            if start == self.pos:
                raise CliError(f"expected integer exponent at position {start}")
            power = int(self.text[start : self.pos])
            out = Polynomial.constant(self.n, 1.0)
            for _ in range(power):
                out = out.mul(base)
            return out
        return base

    def _base(self) -> Polynomial:
        ch = self._peek()
        if ch == "(":
            self.pos += 1
            inner = self._expr()
            if self._peek() != ")":
                raise CliError("unbalanced parenthesis")
            self.pos += 1
            return inner
        if ch == "-":
            self.pos += 1
            return self._base().neg()
        if ch == "x":
            self.pos += 1
            start = self.pos
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            if start == self.pos:
                raise CliError(f"expected variable index after 'x' at position {start}")
            idx = int(self.text[start : self.pos])
            if not 1 <= idx <= self.n:
                raise CliError(f"variable x{idx} out of range for dimension {self.n}")
            return Polynomial.variable(self.n, idx - 1)
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isdigit() or self.text[self.pos] in ".eE"
            or (self.text[self.pos] in "+-" and self.pos > start and self.text[self.pos - 1] in "eE")
        ):
            self.pos += 1
        if start == self.pos:
            raise CliError(f"could not parse '{self.text[self.pos:]}' at position {self.pos}")
        return Polynomial.constant(self.n, float(self.text[start : self.pos]))


def parse_poly(text: str, dimension: int) -> Polynomial:
    return _PolyParser(text, dimension).parse()


# -- subcommand implementations -----------------------------------------------------


def cmd_classify_linear(args) -> int:
    if args.pair:
        A, B = jsonio.load_matrix_pair(args.pair)
        inputs = {"pair": args.pair}
    else:
        if not args.matrix_a or not args.matrix_b:
            raise CliError("provide --matrix-a and --matrix-b, or --pair")
        A = jsonio.load_matrix(args.matrix_a)
        B = jsonio.load_matrix(args.matrix_b)
        inputs = {"matrix_a": args.matrix_a, "matrix_b": args.matrix_b}
    try:
        sde = linclass.LinearSde(A, B)
        verdict = linclass.classify(sde, args.tol)
    except (ValueError, linclass.AmbiguousSpectrumError) as exc:
        raise CliError(str(exc)) from exc
    doc = verdict.to_dict()
    print(json.dumps(doc, sort_keys=True, indent=2))
    if args.out:
        out = Path(args.out)
        jsonio.write_json(out / "verdict.json", doc)
        jsonio.make_manifest(
            "classify-linear", {"tol": args.tol}, None, inputs
        ).write(out)
    if verdict.verdict is linclass.Verdict.ALMOST_SURELY_REACHABLE:
        return EXIT_OK
    return EXIT_NOT_REACHABLE


def cmd_synthesize(args) -> int:
    system_path = bundled.resolve(args.system)
    sys_model, target = jsonio.load_system(system_path)
    out = Path(args.out)
    lambda_grid = tuple(_parse_floats(args.lambda_grid, "--lambda-grid"))
    config = {
        "system": str(args.system),
        "deg_v": args.deg_v,
        "deg_zeta": args.deg_zeta,
        "lambda_grid": list(lambda_grid),
        "max_iters": args.max_iters,
        "s_degree": args.s_degree,
        "multiplier_degree": args.multiplier_degree,
        "eps_target": args.eps_target,
        "gamma_min": args.gamma_min,
        "eq15_sign": bool(args.eq15_sign),
        "skip_variant": bool(args.skip_variant),
        "verify_box_halfwidth": args.verify_box,
        "verify_samples": args.verify_samples,
        "threads": args.threads,
    }
    jsonio.make_manifest("synthesize", config, None, {"system": str(system_path)}).write(out)

    drift_params = sosbuild.DriftSynthesisParams(gamma_min=args.gamma_min)
    try:
        drift_cert = sosbuild.synthesize_drift(sys_model, args.deg_v, drift_params)
    except sosbuild.DriftInfeasibleError as exc:
        print(f"drift synthesis: {exc}", file=_sys.stderr)
        jsonio.write_json(
            out / "drift_infeasible.json",
            {
                "degree": exc.degree,
                "dual_certificate_validated": exc.certified,
                "message": str(exc),
            },
        )
        return EXIT_DRIFT_INFEASIBLE

    jsonio.write_json(out / "drift.json", jsonio.drift_certificate_to_dict(drift_cert))
    halfwidth = args.verify_box or max(2.0 * drift_cert.compact_radius, 2.0)
    box = [(-halfwidth, halfwidth)] * sys_model.n
    drift_report = verify.verify_drift(
        sys_model, drift_cert, box, args.verify_samples, seed=0
    )
    report_doc = {"drift": drift_report.to_dict()}
    print(f"drift certificate: V of degree {drift_cert.V.degree}, "
          f"compact radius {drift_cert.compact_radius:.6g}, "
          f"verification {'PASS' if drift_report.passed else 'FAIL'}")
    if not args.no_plot:
        from . import plots

        plots.render_drift_certificate(sys_model, drift_cert, out / "drift_certificate.png")

    code = EXIT_OK
    if not args.skip_variant:
        tgt = _require_target(target, system_path)
        templates = sosbuild.VariantTemplates(
            zeta_degree=args.deg_zeta,
            s_degree=args.s_degree,
            lambda_degree=args.multiplier_degree,
        )
        params = sosbuild.VariantParams(
            lambda_grid=lambda_grid,
            eps_target=args.eps_target,
            max_iters=args.max_iters,
            literal_eq15_sign=bool(args.eq15_sign),
            threads=args.threads,
        )
        try:
            result = sosbuild.synthesize_variant_alternating(
                sys_model, tgt, drift_cert, templates, params
            )
        except sosbuild.VariantInitialInfeasibleError as exc:
            print(f"variant synthesis: {exc}", file=_sys.stderr)
            jsonio.write_json(out / "variant_infeasible.json", {"message": str(exc)})
            code = EXIT_VARIANT_STALLED
        except sosbuild.VariantStalledError as exc:
            print(f"variant synthesis: {exc}", file=_sys.stderr)
            jsonio.write_csv(
                out / "eps_trace.csv",
                ["lambda", "iteration", "step", "eps"],
                jsonio.sosbuild_trace_rows(exc.trace),
            )
            code = EXIT_VARIANT_STALLED
        else:
            cert = result.certificate
            jsonio.write_json(out / "variant.json", jsonio.variant_certificate_to_dict(cert))
            jsonio.write_csv(
                out / "eps_trace.csv",
                ["lambda", "iteration", "step", "eps"],
                jsonio.sosbuild_trace_rows(result.trace),
            )
            variant_report = verify.verify_variant(
                sys_model, cert, tgt, box, args.verify_samples, seed=0
            )
            report_doc["variant"] = variant_report.to_dict()
            print(
                f"variant certificate: lambda {cert.lam:g}, eps {cert.epsilon:.6g}, "
                f"mu {cert.mu:.6g}, verification "
                f"{'PASS' if variant_report.passed else 'FAIL'}"
            )
            if not args.no_plot:
                from . import plots

                plots.render_eps_trace(result.trace, out / "eps_trace.png")

    jsonio.write_json(out / "verification_report.json", report_doc)
    all_pass = all(section["passed"] for section in report_doc.values())
    if code == EXIT_OK and not all_pass:
        return EXIT_VERIFY_FAILED
    return code


def cmd_simulate(args) -> int:
    system_path = bundled.resolve(args.system)
    sys_model, target = jsonio.load_system(system_path)
    tgt = _require_target(target, system_path)
    x0 = _parse_floats(args.x0, "--x0")
    if len(x0) != sys_model.n:
        raise CliError(f"--x0 must have {sys_model.n} components, got {len(x0)}")
    horizons = _parse_floats(args.horizons, "--horizons")
    try:
        cfg = simulate.SimConfig(dt=args.dt, t_max=args.tmax, n_traj=args.ntraj, seed=args.seed)
        cdf = simulate.hitting_cdf(sys_model, x0, tgt, cfg, horizons)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out = Path(args.out)
    config = {
        "system": str(args.system),
        "x0": x0,
        "dt": args.dt,
        "tmax": args.tmax,
        "ntraj": args.ntraj,
        "horizons": horizons,
        "dump_trajectory": args.dump_trajectory,
    }
    jsonio.make_manifest("simulate", config, args.seed, {"system": str(system_path)}).write(out)
    jsonio.write_csv(
        out / "hitting_cdf.csv", ["horizon", "p_mean", "p10", "p90"], cdf.rows()
    )
    if args.dump_trajectory is not None:
        traj = simulate.euler_maruyama(sys_model, x0, cfg, traj_index=args.dump_trajectory)
        jsonio.write_csv(
            out / f"trajectory_{args.dump_trajectory}.csv",
            ["step", "time"] + [f"x{i + 1}" for i in range(sys_model.n)],
            (
                (k, traj.times[k], *traj.states[k])
                for k in range(traj.states.shape[0])
            ),
        )
    if not args.no_plot:
        from . import plots

        plots.render_hitting_cdf(cdf, out / "hitting_cdf.png")
    terminal = cdf.p_mean[-1] if len(cdf.p_mean) else float("nan")
    print(f"hitting CDF over {args.ntraj} trajectories; terminal estimate {terminal:.4f}")
    return EXIT_OK


def cmd_decrease_field(args) -> int:
    system_path = bundled.resolve(args.system)
    sys_model, _ = jsonio.load_system(system_path)
    cert = jsonio.load_certificate(args.certificate, sys_model.n)
    if not isinstance(cert, sosbuild.VariantCertificate):
        raise CliError("decrease-field requires a variant certificate file")
    box = _parse_box(args.box, sys_model.n)
    try:
        field = simulate.grid_sweep_decrease(
            sys_model, cert.zeta, cert.lam, box, args.resolution,
            args.tau, args.delta, args.samples, args.seed,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    config = {
        "system": str(args.system),
        "certificate": str(args.certificate),
        "box": [list(b) for b in box],
        "resolution": args.resolution,
        "tau": args.tau,
        "delta": args.delta,
        "samples": args.samples,
    }
    jsonio.make_manifest(
        "decrease-field", config, args.seed,
        {"system": str(system_path), "certificate": str(args.certificate)},
    ).write(out)
    header = [f"x{i + 1}" for i in range(sys_model.n)] + ["estimate", "stderr"]
    jsonio.write_csv(
        out / "decrease_field.csv",
        header,
        (
            (*field.points[k], field.estimates[k], field.stderrs[k])
            for k in range(field.points.shape[0])
        ),
    )
    if not args.no_plot:
        from . import plots

        plots.render_decrease_field(field, out / "decrease_field.png")
    print(
        f"decrease field on {field.points.shape[0]} points; minimum "
        f"{field.minimum_estimate:.4f} at {field.minimum_point.tolist()}"
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    system_path = bundled.resolve(args.system)
    sys_model, target = jsonio.load_system(system_path)
    cert = jsonio.load_certificate(args.certificate, sys_model.n)
    box = _parse_box(args.box, sys_model.n)
    if isinstance(cert, sosbuild.DriftCertificate):
        report = verify.verify_drift(sys_model, cert, box, args.samples, seed=args.seed)
    else:
        tgt = _require_target(target, system_path)
        report = verify.verify_variant(sys_model, cert, tgt, box, args.samples, seed=args.seed)
    doc = report.to_dict()
    if args.out:
        out = Path(args.out)
        config = {
            "system": str(args.system),
            "certificate": str(args.certificate),
            "box": [list(b) for b in box],
            "samples": args.samples,
        }
        jsonio.make_manifest(
            "verify", config, args.seed,
            {"system": str(system_path), "certificate": str(args.certificate)},
        ).write(out)
        jsonio.write_json(out / "verification_report.json", doc)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        line = f"{status} {check.name} (margin {check.margin:.3e})"
        if not check.passed and check.worst_point is not None:
            line += f" witness {check.worst_point}"
        if check.note:
            line += f" [{check.note}]"
        print(line)
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def cmd_demo_divergence(args) -> int:
    demo = simulate.doublewell_divergence_demo(args.dt, args.steps)
    print(f"stability threshold sqrt(1 + 3/(4*dt)) = {demo.threshold:.6g}")
    print(f"starting the noiseless Euler map at x0 = {demo.x0:.6g} (twice the threshold)")
    print(f"{'step':>4}  {'log10|x|':>14}  {'|x_k+1|/|x_k| >= 2':>20}")
    for k, ratio in enumerate(demo.ratios):
        flag = "yes" if ratio >= 2.0 else "NO"
        print(f"{k + 1:>4}  {demo.magnitudes_log10[k + 1]:>14.6g}  {flag:>20}")
    print(
        "magnitude at least doubles every step"
        if demo.all_ratios_at_least_two
        else "WARNING: doubling bound violated"
    )
    return EXIT_OK


def cmd_poly_parse(args) -> int:
    poly = parse_poly(args.expression, args.dim)
    print(json.dumps(jsonio.poly_to_dict(poly), sort_keys=True, indent=2))
    return EXIT_OK


def cmd_examples(args) -> int:
    if args.export:
        written = bundled.export(args.export)
        for p in written:
            print(p)
    else:
        for name in bundled.names():
            print(name)
    return EXIT_OK


# -- argument wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdereach",
        description="Almost-sure reachability certificates for stochastic systems",
    )
    parser.add_argument("--version", action="version", version=f"sdereach {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify-linear", help="Theorem-based verdict for linear SDEs")
    p.add_argument("--matrix-a", help="JSON file with the drift matrix A")
    p.add_argument("--matrix-b", help="JSON file with the noise matrix B")
    p.add_argument("--pair", help="JSON file holding both matrices under 'A' and 'B'")
    p.add_argument("--tol", type=float, default=1e-9, help="neutral-axis tolerance")
    p.add_argument("--out", help="optional output directory for the verdict")
    p.set_defaults(func=cmd_classify_linear)

    p = sub.add_parser("synthesize", help="SOS drift and variant certificate synthesis")
    p.add_argument("--system", required=True, help="system file or bundled name")
    p.add_argument("--deg-v", type=int, required=True, help="even degree of the drift template")
    p.add_argument("--deg-zeta", type=int, default=None, help="degree of the variant template")
    p.add_argument("--lambda-grid", default="1,2,4,8,16,32,64",
                   help="comma-separated steepness grid")
    p.add_argument("--max-iters", type=int, default=20)
    p.add_argument("--s-degree", type=int, default=2, help="containment multiplier degree")
    p.add_argument("--multiplier-degree", type=int, default=2,
                   help="mean-decrease multiplier degree")
    p.add_argument("--eps-target", type=float, default=1e-4)
    p.add_argument("--gamma-min", type=float, default=1e-3)
    p.add_argument("--eq15-sign", action="store_true",
                   help="use the alternative sign listing for containment")
    p.add_argument("--skip-variant", action="store_true")
    p.add_argument("--verify-box", type=float, default=None,
                   help="half-width of the verification box")
    p.add_argument("--verify-samples", type=int, default=2000)
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for the lambda grid")
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="hitting-time CDF estimation")
    p.add_argument("--system", required=True)
    p.add_argument("--x0", required=True, help="comma-separated initial state")
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--ntraj", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--horizons", required=True, help="comma-separated horizons")
    p.add_argument("--dump-trajectory", type=int, default=None,
                   help="also dump this trajectory index as CSV")
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decrease-field", help="one-step decrease probability field")
    p.add_argument("--system", required=True)
    p.add_argument("--certificate", required=True, help="variant certificate JSON")
    p.add_argument("--box", required=True)
    p.add_argument("--resolution", type=int, default=21)
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--delta", type=float, default=0.001)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decrease_field)

    p = sub.add_parser("verify", help="sampled validation of a stored certificate")
    p.add_argument("--system", required=True)
    p.add_argument("--certificate", required=True)
    p.add_argument("--box", required=True,
                   help="half-width, or comma list lo1,hi1,lo2,hi2,...")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="optional output directory")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("demo-divergence", help="explicit-scheme divergence demo")
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--steps", type=int, default=20)
    p.set_defaults(func=cmd_demo_divergence)

    p = sub.add_parser("poly-parse", help="infix polynomial to JSON term list")
    p.add_argument("expression")
    p.add_argument("--dim", type=int, required=True)
    p.set_defaults(func=cmd_poly_parse)

    p = sub.add_parser("examples", help="list or export bundled systems")
    p.add_argument("--export", help="directory to copy the bundled files into")
    p.set_defaults(func=cmd_examples)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, jsonio.SchemaError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
