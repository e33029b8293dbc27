"""Command-line interface: ``ncftap check | verify | integrate | generate | validate``.

Exit codes for ``check``: 0 EMS, 2 ARBITRAGE, 3 UNDECIDED, 1 input error.
``NCFTAP_TOL`` overrides the default feasibility tolerance.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .algebra import DEFAULT_TOL, AlgebraElement, self_adjoint_residual, validate_filtration
from .errors import NCFTAPError
from .ftap import Outcome, Verdict, check_nfl, verify_certificate
from .integration import (
    AdaptedProcess,
    TradingStrategy,
    identity_strategy,
    stopped_integral,
    validate_adapted,
)
from .marketfile import (
    MarketFileError,
    dumps_market,
    element_from_json,
    element_to_json,
    integrand_from_json,
    load_market,
    strategy_to_json,
)
from .martingale import DEFAULT_TOL_POS, State
from .models import (
    QuantumBinomialSpec,
    binomial_tree,
    embed_classical,
    quantum_binomial,
    random_market,
    trinomial_tree,
)

EXIT_INPUT_ERROR = 1
SCHEMA_VERSION = 1


def _default_tol() -> float:
    raw = os.environ.get("NCFTAP_TOL")
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise MarketFileError(f"NCFTAP_TOL={raw!r} is not a number") from None
    if not tol > 0:
        raise MarketFileError(f"NCFTAP_TOL must be positive, got {raw}")
    return tol


def _fmt_element(x: AlgebraElement, indent: str = "  ") -> str:
    out = []
    real = all(np.abs(b.imag).max(initial=0.0) == 0.0 for b in x.blocks)
    for k, b in enumerate(x.blocks):
        arr = (b.real if real else b) + 0.0  # drop negative zeros
        body = np.array2string(arr, precision=8, suppress_small=True, max_line_width=120)
        out.append(f"{indent}block {k}:\n" + "\n".join(indent + "  " + line for line in body.splitlines()))
    return "\n".join(out)


def _margin(v: float | None):
    return None if v is None or not math.isfinite(v) else v


# ---------------------------------------------------------------------------
# verdict <-> JSON


def verdict_to_json(v: Verdict, tol: float, tol_pos: float, report) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "outcome": v.outcome.value,
        "exit_code": v.exit_code,
        "tol": tol,
        "tol_pos": tol_pos,
        "ems_feasible": math.isfinite(v.ems_margin),
        "ems_margin": _margin(v.ems_margin),
        "arbitrage_margin": _margin(v.arbitrage_margin),
        "density": None if v.state is None else element_to_json(v.state.density),
        "strategy": None if v.strategy is None else strategy_to_json(v.strategy),
        "payoff": None if v.payoff is None else element_to_json(v.payoff),
        "info": v.info,
        "verification": report.to_dict(),
    }


def verdict_from_json(doc: dict, X: AdaptedProcess) -> Verdict:
    """Rebuild a verdict from ``check --json`` output, for independent re-verification."""
    alg = X.algebra
    try:
        outcome = Outcome(doc["outcome"])
    except (KeyError, ValueError, TypeError):
        raise MarketFileError("certificate: missing or unknown 'outcome'") from None
    state = strategy = payoff = None
    if doc.get("density") is not None:
        state = State(alg, element_from_json(doc["density"], alg, "density"), doc.get("tol", DEFAULT_TOL))
    if doc.get("strategy") is not None:
        strategy = integrand_from_json(doc["strategy"], X.filtration)
        if not isinstance(strategy, TradingStrategy):
            raise MarketFileError("certificate: 'strategy' must have kind 'strategy'")
    if doc.get("payoff") is not None:
        payoff = element_from_json(doc["payoff"], alg, "payoff")
    lam = doc.get("ems_margin")
    return Verdict(outcome, state=state, ems_margin=-math.inf if lam is None else lam,
                   strategy=strategy, payoff=payoff, arbitrage_margin=doc.get("arbitrage_margin"))


# ---------------------------------------------------------------------------
# commands


def cmd_check(args) -> int:
    X = load_market(args.market, tol=args.tol)
    v = check_nfl(X, args.tol, args.tol_pos, method=args.method)
    rep = verify_certificate(v, X, args.tol, args.tol_pos)
    if args.json:
        print(json.dumps(verdict_to_json(v, args.tol, args.tol_pos, rep), indent=1))
        return v.exit_code
    lam = "-inf (no trace-one density annihilates the payoffs)" if not math.isfinite(v.ems_margin) \
        else f"{v.ems_margin:.10g}"
    print(f"outcome: {v.outcome.value}")
    print(f"lambda* (EMS margin): {lam}")
    if v.arbitrage_margin is not None:
        print(f"mu* (arbitrage margin): {v.arbitrage_margin:.10g}")
    print(f"payoff space: dimension {v.info['payoff_dim']} from {v.info['generators']} generators")
    if v.state is not None:
        print("martingale density rho:")
        print(_fmt_element(v.state.density))
    if v.strategy is not None:
        print("arbitrage strategy (alpha, a) per step:")
        for k, step in enumerate(v.strategy.steps):
            print(f" step {k}: {len(step)} term(s)")
            for alpha, a in step:
                print(f"  alpha = {alpha:.10g}")
                print(_fmt_element(a, "    "))
        print("payoff k:")
        print(_fmt_element(v.payoff))
    if v.outcome is not Outcome.UNDECIDED:
        print(rep.format())
    return v.exit_code


def cmd_verify(args) -> int:
    X = load_market(args.market, tol=args.tol)
    try:
        doc = json.loads(Path(args.certificate).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MarketFileError(f"cannot read certificate {args.certificate}: {exc}") from None
    v = verdict_from_json(doc, X)
    rep = verify_certificate(v, X, args.tol, args.tol_pos)
    print(rep.format())
    return 0 if rep.passed else 1


def cmd_integrate(args) -> int:
    X = load_market(args.market, tol=args.tol)
    f = X.filtration
    if args.strategy == "identity":
        H = identity_strategy(f)
    else:
        try:
            doc = json.loads(Path(args.strategy).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise MarketFileError(f"cannot read integrand {args.strategy}: {exc}") from None
        H = integrand_from_json(doc, f)
    s = f.times[0] if args.t_from is None else args.t_from
    t = f.times[-1] if args.t_to is None else args.t_to
    Y = stopped_integral(H, s, t, X)
    sa = self_adjoint_residual(X.algebra, Y) if isinstance(H, TradingStrategy) else None
    if args.json:
        out = {"from": s, "to": t, "integral": element_to_json(Y)}
        if sa is not None:
            out["self_adjoint_residual"] = sa
        print(json.dumps(out))
        return 0
    print(f"integral over [{s:g}, {t:g}):")
    print(_fmt_element(Y))
    if sa is not None:
        print(f"self-adjoint residual ||Y - Y*||_2 = {sa:.3e}")
    return 0


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def cmd_generate(args) -> int:
    if args.kind == "classical":
        if args.mid is None:
            tree = binomial_tree(args.s0, args.up, args.down, args.rate, args.periods)
        else:
            tree = trinomial_tree(args.s0, args.up, args.mid, args.down, args.rate, args.periods)
        _, X = embed_classical(tree)
    elif args.kind == "qbinomial":
        ang = _floats(args.angle)
        spec = QuantumBinomialSpec(args.periods, args.up, args.down, args.rate,
                                   ang[0] if len(ang) == 1 else ang, args.s0)
        _, X = quantum_binomial(spec)
    else:
        _, X = random_market(args.seed, tuple(int(n) for n in args.blocks.split(",")), args.periods)
    text = dumps_market(X)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def cmd_validate(args) -> int:
    X = load_market(args.market, validate=False)
    ok = True
    for rep in (validate_filtration(X.filtration, args.tol), validate_adapted(X, args.tol)):
        print(rep.format())
        ok = ok and rep.passed
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncftap",
                                description="No-free-lunch / martingale-state decisions for "
                                            "finite-dimensional non-commutative markets.")
    sub = p.add_subparsers(dest="command", required=True)

    def tol_args(sp):
        sp.add_argument("--tol", type=float, default=None,
                        help="feasibility tolerance (default 1e-8, or $NCFTAP_TOL)")
        sp.add_argument("--tol-pos", type=float, default=DEFAULT_TOL_POS,
                        help="strict-positivity margin for faithful states (default 1e-6)")

    c = sub.add_parser("check", help="decide EMS vs arbitrage and print the certificate")
    c.add_argument("market")
    tol_args(c)
    c.add_argument("--json", action="store_true", help="machine-readable output")
    c.add_argument("--method", default="barrier", choices=["barrier", "supergradient"])
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("verify", help="re-verify a certificate produced by 'check --json'")
    v.add_argument("market")
    v.add_argument("certificate")
    tol_args(v)
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("integrate", help="stochastic integral of a strategy or biprocess")
    i.add_argument("market")
    i.add_argument("strategy", help="'identity' or a JSON integrand file")
    i.add_argument("--from", dest="t_from", type=float, default=None)
    i.add_argument("--to", dest="t_to", type=float, default=None)
    i.add_argument("--tol", type=float, default=None)
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_integrate)

    g = sub.add_parser("generate", help="write a market file")
    g.add_argument("kind", choices=["classical", "qbinomial", "random"])
    g.add_argument("--periods", type=int, default=1)
    g.add_argument("--up", type=float, default=1.2)
    g.add_argument("--down", type=float, default=0.9)
    g.add_argument("--mid", type=float, default=None, help="classical only: trinomial middle factor")
    g.add_argument("--rate", type=float, default=0.05)
    g.add_argument("--s0", type=float, default=1.0)
    g.add_argument("--angle", default="0", help="qbinomial: one angle or a comma list per period")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--blocks", default="2,1", help="random: comma-separated block sizes")
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_generate)

    val = sub.add_parser("validate", help="print filtration and adaptedness residuals")
    val.add_argument("market")
    val.add_argument("--tol", type=float, default=None)
    val.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "tol", "absent") is None:
            args.tol = _default_tol()
        return args.func(args)
    except (NCFTAPError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
