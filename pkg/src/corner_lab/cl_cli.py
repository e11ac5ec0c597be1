import argparse
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from sympy import isprime, primerange

from .cl_counting import (
    corner_census,
    count_corners,
    degree_lowering_trace,
    error_scan,
    two_term_scan,
    validate_inequality_chain,
)
from .cl_gowers import DirectionSpec, box_norm, directional_subgroup, u2_inverse
from .cl_grid import generate, generate_triple
from .cl_jacobian import WITNESS_BUDGET, nonvanishing_witness, verify_identity
from .cl_kernel import bombieri_check, bombieri_row, kernel_table
from .cl_ratfun import (
    BadPrime,
    RatFunFp,
    RatFunQ,
    is_linearly_independent_with_one,
    parse_ratfun,
    reduce_pair_mod_p,
)
from .cl_util import (
    CL_BOMBIERI_ROW,
    CL_COORDINATE,
    CL_COUNT_METHOD,
    CL_IDENTITY,
    CL_NONVANISHING,
    CornerLabError,
    ExpressionSyntaxError,
    InvariantViolationError,
    NumericalHealthError,
    ZeroDenominatorError,
    format_time,
    get_logger,
    set_log_level,
)
from .cl_varieties import (
    N8_SIGNS,
    W_SIGNS,
    X_SIGNS,
    VarietyCountReport,
    dimension_scan,
    roth_count_brute,
    roth_count_charsum,
    roth_count_structured,
    signed_sum_histogram,
    zprime_count,
    zprime_count_direct,
)
from .constants import BRUTE_MAX_P, CSV_SCHEMA_HEADER, STRUCTURED_MAX_P, TESTING_PRIME, TOLERANCES

logger = get_logger("CL_CLI")

EXIT_OK = 0
EXIT_INVALID_INPUT = 1
EXIT_BAD_PRIME = 2
EXIT_INVARIANT = 3
EXIT_NUMERICAL = 4

DETERMINISTIC_GENERATORS = ("const", "char", "file")
HISTOGRAM_PATTERNS = {"X": X_SIGNS, "W": W_SIGNS, "N8": N8_SIGNS}


class BadPrimeExit(CornerLabError):
    def __init__(self, bad: BadPrime):
        super().__init__(str(bad))
        self.bad = bad


@dataclass
class RunConfig:
    command: str = ""
    P: str = "t"
    Q: str = "t^2"
    p: Optional[int] = None
    primes: Optional[str] = None
    seed: Optional[int] = None
    seeds: Optional[str] = None
    gen: list[str] = field(default_factory=lambda: ["unimodular"])
    method: str = "all"
    dirs: str = "0xFp,0xFp"
    coordinate: str = "second"
    density: float = 0.5
    identity: str = "all"
    trials: int = 200
    budget: int = WITNESS_BUDGET
    prime: int = TESTING_PRIME
    pattern: Optional[str] = None
    signs: Optional[str] = None
    axis: Optional[str] = None
    roth_ratio: Optional[float] = None
    with_roth: bool = False
    direct: bool = False
    dump: Optional[str] = None
    golden: Optional[str] = None
    out: Optional[str] = None
    workers: int = 1
    timings: bool = False
    allow_dependent: bool = False
    verbose: bool = False
    full: bool = False

    def __str__(self) -> str:
        return self.__repr__()


def parse_int_list(text: str) -> list[int]:
    """'1,2,5-7' -> [1, 2, 5, 6, 7]."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def parse_primes(text: str) -> list[int]:
    """Comma list of primes, with ranges 'a-b' expanding to every prime in [a, b]."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = (int(x) for x in part.split("-", 1))
            out.extend(int(q) for q in primerange(lo, hi + 1))
        elif part:
            p = int(part)
            if not isprime(p):
                raise ValueError(f"{p} is not prime.")
            out.append(p)
    return sorted(set(out))


def _load_config(path: str) -> dict:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"Config file '{path}' must hold a JSON object.")
    names = {f.name for f in fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"Unknown config keys {sorted(unknown)}.")
    return data


def _parse_pair(config: RunConfig) -> tuple[RatFunQ, RatFunQ]:
    P, Q = parse_ratfun(config.P), parse_ratfun(config.Q)
    certificate = is_linearly_independent_with_one(P, Q)
    if not certificate:
        if not config.allow_dependent:
            raise ValueError(f"P = {P} and Q = {Q} are dependent with 1 ({certificate}); pass --allow-dependent.")
        logger.warning(f"Running on the dependent pair {P}, {Q}.")
    return P, Q


def _single_prime(config: RunConfig) -> int:
    if config.p is None:
        raise ValueError(f"{config.command} needs --p.")
    if not isprime(config.p):
        raise ValueError(f"{config.p} is not prime.")
    return config.p


def _reduce(config: RunConfig) -> tuple[RatFunFp, RatFunFp]:
    P, Q = _parse_pair(config)
    pair = reduce_pair_mod_p(P, Q, _single_prime(config))
    if isinstance(pair, BadPrime):
        raise BadPrimeExit(pair)
    return pair


def _prime_list(config: RunConfig) -> list[int]:
    if config.primes is not None:
        return parse_primes(config.primes)
    return [_single_prime(config)]


def _is_randomized(generators: list[str]) -> bool:
    return any(g.split(":", 1)[0] not in DETERMINISTIC_GENERATORS for g in generators)


def _seed(config: RunConfig, randomized: bool = True) -> int:
    if config.seed is None:
        if randomized:
            raise ValueError(f"{config.command} is randomized and needs --seed.")
        return 0
    return config.seed


def _seed_list(config: RunConfig) -> list[int]:
    if config.seeds is not None:
        return parse_int_list(config.seeds)
    if config.seed is not None:
        return [config.seed]
    raise ValueError(f"{config.command} is randomized and needs --seeds or --seed.")


def _emit(text: str, config: RunConfig) -> None:
    if config.out is None:
        sys.stdout.write(text)
    else:
        Path(config.out).write_text(text)
        logger.info(f"Wrote {config.out}.")


def _emit_json(data, config: RunConfig) -> None:
    _emit(json.dumps(data, indent=2, sort_keys=True) + "\n", config)


def to_csv_text(df: pd.DataFrame, timings: bool = False) -> str:
    if not timings and "seconds" in df.columns:
        df = df.drop(columns="seconds")
    return CSV_SCHEMA_HEADER + "\n" + df.to_csv(index=False, lineterminator="\n", float_format="%.12g")


def _emit_csv(df: pd.DataFrame, config: RunConfig) -> None:
    _emit(to_csv_text(df, config.timings), config)


def _scan_over_primes(fn: Callable[..., pd.DataFrame], primes: list[int], workers: int, *args) -> pd.DataFrame:
    """fn(*args, [p]) per prime, in a process pool when workers > 1; rows sorted by p."""
    if workers > 1 and len(primes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            frames = list(pool.map(_call_on_prime, [(fn, args, p) for p in primes]))
    else:
        frames = [_call_on_prime((fn, args, p)) for p in primes]
    frames = [f for f in frames if not f.empty]
    if not frames:
        return pd.DataFrame()
    return pd.concat(frames, ignore_index=True).sort_values("p", kind="stable").reset_index(drop=True)


def _call_on_prime(job: tuple) -> pd.DataFrame:
    fn, args, p = job
    return fn(*args, [p])


def _bombieri_frame(P: RatFunQ, Q: RatFunQ, primes: list[int]) -> pd.DataFrame:
    rows: list[CL_BOMBIERI_ROW] = []
    for p in primes:
        pair = reduce_pair_mod_p(P, Q, p)
        if isinstance(pair, BadPrime):
            logger.info(f"Skipping {pair}.")
            continue
        rows.append(bombieri_row(*pair))
    return pd.DataFrame(rows, columns=list(CL_BOMBIERI_ROW.__annotations__))


def _error_frame(P: RatFunQ, Q: RatFunQ, seeds: list[int], gens: list[str], primes: list[int]) -> pd.DataFrame:
    return error_scan(P, Q, primes, seeds, gens)


def _two_term_frame(P: RatFunQ, seeds: list[int], gen: str, axis: CL_COORDINATE, primes: list[int]) -> pd.DataFrame:
    return two_term_scan(P, primes, seeds, gen, axis)


def _dimension_frame(P: RatFunQ, Q: RatFunQ, primes: list[int]) -> pd.DataFrame:
    return dimension_scan(P, Q, primes)


# Subcommands


def cmd_count_corners(config: RunConfig) -> int:
    Pp, Qp = _reduce(config)
    seed = _seed(config, _is_randomized(config.gen))
    f0, f1, f2 = generate_triple(config.gen, Pp.p, seed)
    report = count_corners(f0, f1, f2, Pp, Qp, {"seed": seed, "gen": list(config.gen)})
    _emit_json(report.to_json(), config)
    return EXIT_OK


def cmd_error_scan(config: RunConfig) -> int:
    primes = _prime_list(config)
    seeds = _seed_list(config)
    if config.axis is not None:
        P = parse_ratfun(config.P)
        df = _scan_over_primes(
            _two_term_frame, primes, config.workers, P, seeds, config.gen[0], CL_COORDINATE(config.axis)
        )
    else:
        P, Q = _parse_pair(config)
        df = _scan_over_primes(_error_frame, primes, config.workers, P, Q, seeds, config.gen)
    _emit_csv(df, config)
    return EXIT_OK


def cmd_corner_census(config: RunConfig) -> int:
    Pp, Qp = _reduce(config)
    seed = _seed(config)
    if not 0.0 <= config.density <= 1.0:
        raise ValueError(f"Density must lie in [0, 1], got {config.density}.")
    rng = np.random.default_rng(seed)
    A = rng.random((Pp.p, Pp.p)) < config.density
    report = corner_census(A, Pp, Qp)
    _emit_json(
        {
            "p": report.p,
            "seed": seed,
            "density": config.density,
            "count": report.count,
            "delta": report.delta,
            "ratio": report.ratio,
            "main_over_delta3": report.main_over_delta3,
        },
        config,
    )
    return EXIT_OK


def cmd_gowers_norm(config: RunConfig) -> int:
    p = _single_prime(config)
    seed = _seed(config, _is_randomized(config.gen[:1]))
    f = generate(config.gen[0], p, seed)
    dirs = DirectionSpec.parse(config.dirs)
    _emit_json({"p": p, "seed": seed, "gen": config.gen[0], "dirs": str(dirs), "norm": box_norm(f, dirs)}, config)
    return EXIT_OK


def cmd_inverse_u2(config: RunConfig) -> int:
    p = _single_prime(config)
    seed = _seed(config, _is_randomized(config.gen[:1]))
    f = generate(config.gen[0], p, seed)
    coordinate = CL_COORDINATE(config.coordinate)
    chi, corr = u2_inverse(f, coordinate)
    u2 = box_norm(f, [directional_subgroup(coordinate)] * 2)
    _emit_json(
        {
            "p": p,
            "seed": seed,
            "coordinate": str(coordinate),
            "correlation": corr,
            "u2_fourth_power": u2**4,
            "eigenfunction": chi.to_json(),
        },
        config,
    )
    return EXIT_OK


def cmd_kernel_table(config: RunConfig) -> int:
    Pp, Qp = _reduce(config)
    K = kernel_table(Pp, Qp)
    sup, normalized = bombieri_check(K)
    defect = K.conjugate_symmetry_defect()
    if defect > TOLERANCES.kernel_symmetry:
        raise InvariantViolationError(f"Kernel conjugate symmetry defect {defect}.")
    if config.dump is not None:
        K.dump(Path(config.dump))
    k00 = K[0, 0]
    _emit_json(
        {
            "p": K.p,
            "pole_count": K.pole_count,
            "K00": [k00.real, k00.imag],
            "sup": sup,
            "normalized": normalized,
            "conjugate_symmetry_defect": defect,
            "mass": K.mass(),
            "collision_count": K.collision_count(),
        },
        config,
    )
    return EXIT_OK


def cmd_bombieri_scan(config: RunConfig) -> int:
    P, Q = _parse_pair(config)
    df = _scan_over_primes(_bombieri_frame, _prime_list(config), config.workers, P, Q)
    _emit_csv(df, config)
    return EXIT_OK


def cmd_roth_count(config: RunConfig) -> int:
    Pp, Qp = _reduce(config)
    p = Pp.p
    method = config.method
    wanted = {
        CL_COUNT_METHOD.BRUTE: method in ("brute", "all") and (method == "brute" or p <= BRUTE_MAX_P),
        CL_COUNT_METHOD.STRUCTURED: method in ("structured", "all") and (method == "structured" or p <= STRUCTURED_MAX_P),
        CL_COUNT_METHOD.CHARSUM: method in ("charsum", "all"),
    }
    if method not in ("brute", "structured", "charsum", "all"):
        raise ValueError(f"Unknown method '{method}'.")
    reports: list[VarietyCountReport] = []
    counters = {CL_COUNT_METHOD.BRUTE: roth_count_brute, CL_COUNT_METHOD.STRUCTURED: roth_count_structured}
    for m, counter in counters.items():
        if wanted[m]:
            t0 = time.perf_counter()
            count = counter(Pp, Qp)
            reports.append(VarietyCountReport("Y", p, count, 6, m, seconds=time.perf_counter() - t0))
    charsum = None
    if wanted[CL_COUNT_METHOD.CHARSUM]:
        charsum = roth_count_charsum(Pp, Qp)
        reports.append(charsum)
    rows = [r.to_row() for r in reports]
    if not config.timings:
        for row in rows:
            row.pop("seconds", None)
    _emit_json({"p": p, "P": str(Pp), "Q": str(Qp), "counts": rows}, config)
    if charsum is not None and not charsum.reliable:
        raise NumericalHealthError(f"Charsum residual {charsum.residual:.3e} at p={p}.")
    counts = {r.count for r in reports}
    if len(counts) > 1:
        raise InvariantViolationError(f"Roth counts disagree at p={p}: {[(str(r.method), r.count) for r in reports]}.")
    return EXIT_OK


def compare_golden(df: pd.DataFrame, path: Path) -> None:
    """Integers must match exactly, floats to the slack tolerance."""
    golden = pd.read_csv(path, comment="#")
    current = pd.read_csv(io.StringIO(to_csv_text(df)), comment="#")
    if list(golden.columns) != list(current.columns) or len(golden) != len(current):
        raise InvariantViolationError(f"Scan shape differs from golden file '{path}'.")
    for column in current.columns:
        a, b = current[column], golden[column]
        if pd.api.types.is_float_dtype(a) or pd.api.types.is_float_dtype(b):
            ok = np.allclose(a.astype(float), b.astype(float), rtol=0.0, atol=TOLERANCES.slack, equal_nan=True)
        else:
            ok = bool((a.astype(str) == b.astype(str)).all())
        if not ok:
            raise InvariantViolationError(f"Column '{column}' differs from golden file '{path}'.")


def cmd_variety_scan(config: RunConfig) -> int:
    P, Q = _parse_pair(config)
    df = _scan_over_primes(_dimension_frame, _prime_list(config), config.workers, P, Q)
    _emit_csv(df, config)
    if config.golden is not None:
        golden = Path(config.golden)
        if golden.exists():
            compare_golden(df, golden)
            logger.info(f"Scan matches golden file {golden}.")
        else:
            golden.write_text(to_csv_text(df))
            logger.info(f"Established golden file {golden}.")
    if "residual" in df.columns and (df["residual"].fillna(0.0) >= TOLERANCES.charsum_residual).any():
        raise NumericalHealthError("Some charsum counts are unreliable.")
    return EXIT_OK


def cmd_zprime_count(config: RunConfig) -> int:
    Pp, Qp = _reduce(config)
    report = zprime_count(Pp, Qp)
    out = {
        "p": report.p,
        "count": report.count,
        "ratio": report.count / report.p**5,
        "r_undefined": report.r_undefined,
        "zero_product": report.zero_product,
    }
    if config.direct:
        direct = zprime_count_direct(Pp, Qp)
        out["direct"] = direct
        if direct != report.count:
            _emit_json(out, config)
            raise InvariantViolationError(f"Z' join count {report.count} != direct count {direct}.")
    _emit_json(out, config)
    return EXIT_OK


def cmd_histogram(config: RunConfig) -> int:
    Pp, Qp = _reduce(config)
    if config.signs is not None:
        signs = tuple(int(s) for s in config.signs.replace("+", "").split(","))
    else:
        signs = HISTOGRAM_PATTERNS[config.pattern or "X"]
    N = signed_sum_histogram(Pp, Qp, signs)
    a, b = np.indices(N.shape)
    df = pd.DataFrame({"a": a.ravel(), "b": b.ravel(), "count": N.ravel()})
    _emit_csv(df, config)
    return EXIT_OK


def cmd_jacobian_verify(config: RunConfig) -> int:
    P, Q = _parse_pair(config)
    seed = _seed(config)
    identities = list(CL_IDENTITY) if config.identity == "all" else [CL_IDENTITY(config.identity)]
    reports = [verify_identity(i, P, Q, config.trials, seed, config.prime) for i in identities]
    _emit_json([r.to_json() for r in reports], config)
    if not all(r.passed for r in reports):
        raise InvariantViolationError("Jacobian identity mismatches found.")
    return EXIT_OK


def cmd_nonvanishing(config: RunConfig) -> int:
    P, Q = _parse_pair(config)
    seed = _seed(config)
    identities = list(CL_NONVANISHING) if config.identity == "all" else [CL_NONVANISHING(config.identity)]
    results = [nonvanishing_witness(i, P, Q, config.budget, seed, config.prime) for i in identities]
    _emit_json([r.to_json() for r in results], config)
    return EXIT_OK


def _roth_ratio(config: RunConfig, Pp: RatFunFp, Qp: RatFunFp) -> Optional[float]:
    if config.roth_ratio is not None:
        return config.roth_ratio
    if config.with_roth:
        report = roth_count_charsum(Pp, Qp)
        if not report.reliable:
            raise NumericalHealthError(f"Charsum residual {report.residual:.3e} at p={Pp.p}.")
        return report.ratio
    return None


def cmd_chain_validate(config: RunConfig) -> int:
    Pp, Qp = _reduce(config)
    seeds = _seed_list(config)
    roth_ratio = _roth_ratio(config, Pp, Qp)
    if roth_ratio is None:
        roth_ratio = roth_count_charsum(Pp, Qp).ratio
    frames = []
    for seed in seeds:
        f0, f1, f2 = generate_triple(config.gen, Pp.p, seed)
        frame = validate_inequality_chain(f0, f1, f2, Pp, Qp, roth_ratio).to_frame()
        frame.insert(0, "seed", seed)
        frame.insert(0, "p", Pp.p)
        frames.append(frame)
    df = pd.concat(frames, ignore_index=True)
    _emit_csv(df, config)
    if not df["ok"].all():
        raise InvariantViolationError(f"Inequality chain fails at p={Pp.p}, min slack {df['slack'].min():.3e}.")
    return EXIT_OK


def cmd_degree_lowering_trace(config: RunConfig) -> int:
    Pp, Qp = _reduce(config)
    seed = _seed(config, _is_randomized(config.gen))
    f0, f1, f2 = generate_triple(config.gen, Pp.p, seed)
    trace = degree_lowering_trace(f0, f1, f2, Pp, Qp, _roth_ratio(config, Pp, Qp))
    _emit_json(trace.to_json(), config)
    if not trace.ok:
        raise InvariantViolationError(f"Degree-lowering trace has failing strict steps at p={Pp.p}.")
    return EXIT_OK


def cmd_selftest(config: RunConfig) -> int:
    from .cl_selftest import run_selftest

    report = run_selftest(full=config.full)
    _emit_csv(report, config)
    failed = report[~report["ok"]]
    if not failed.empty:
        logger.error(f"{len(failed)} selftest checks failed: {list(failed['check'])}.")
        return EXIT_INVARIANT
    return EXIT_OK


# fmt: off
COMMANDS: dict[str, tuple[Callable[[RunConfig], int], str]] = {
    "count-corners":         (cmd_count_corners, "corner operator, main term and error for one prime"),
    "error-scan":            (cmd_error_scan, "error of the corner (or two-term) operator over primes and seeds"),
    "corner-census":         (cmd_corner_census, "count corners inside a random set"),
    "gowers-norm":           (cmd_gowers_norm, "box norm of a generated grid function"),
    "inverse-u2":            (cmd_inverse_u2, "extract a correlating eigenfunction"),
    "kernel-table":          (cmd_kernel_table, "exponential-sum kernel summary, optional binary dump"),
    "bombieri-scan":         (cmd_bombieri_scan, "sup |K| * sqrt(p) over primes"),
    "roth-count":            (cmd_roth_count, "point count of the Roth variety"),
    "variety-scan":          (cmd_variety_scan, "normalized variety counts over primes"),
    "zprime-count":          (cmd_zprime_count, "meet-in-the-middle count of Z'"),
    "histogram":             (cmd_histogram, "signed-sum value histogram"),
    "jacobian-verify":       (cmd_jacobian_verify, "randomized Jacobian identity tests"),
    "nonvanishing":          (cmd_nonvanishing, "witness search for non-vanishing expressions"),
    "chain-validate":        (cmd_chain_validate, "inequality chain slack over seeds"),
    "degree-lowering-trace": (cmd_degree_lowering_trace, "branch and step trace of the degree-lowering argument"),
    "selftest":              (cmd_selftest, "every cross-method and invariant check"),
}
# fmt: on


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--P", help="rational function in t, e.g. 't^2/(t^7-5*t^3)'")
    sub.add_argument("--Q", help="rational function in t")
    sub.add_argument("--p", type=int, help="prime")
    sub.add_argument("--primes", help="comma list of primes or ranges, e.g. '5-31,61'")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--seeds", help="comma list or ranges, e.g. '0-19'")
    sub.add_argument("--gen", nargs="+", help="generator descriptors, one or three")
    sub.add_argument("--method", choices=["brute", "structured", "charsum", "all"])
    sub.add_argument("--dirs", help="direction subgroups, e.g. '0xFp,Fp2'")
    sub.add_argument("--coordinate", choices=[str(c) for c in CL_COORDINATE])
    sub.add_argument("--density", type=float)
    sub.add_argument("--identity", help="identity or expression name, or 'all'")
    sub.add_argument("--trials", type=int)
    sub.add_argument("--budget", type=int)
    sub.add_argument("--prime", type=int, help="field for randomized identity testing")
    sub.add_argument("--pattern", choices=sorted(HISTOGRAM_PATTERNS))
    sub.add_argument("--signs", help="comma list of +1/-1")
    sub.add_argument("--axis", choices=[str(c) for c in CL_COORDINATE], help="run the two-term operator along axis")
    sub.add_argument("--roth-ratio", dest="roth_ratio", type=float)
    sub.add_argument("--with-roth", dest="with_roth", action="store_true", default=None)
    sub.add_argument("--direct", action="store_true", default=None)
    sub.add_argument("--full", action="store_true", default=None, help="selftest at the full prime ranges")
    sub.add_argument("--dump", help="binary kernel dump path")
    sub.add_argument("--golden", help="golden CSV path")
    sub.add_argument("--out", help="output path, stdout if omitted")
    sub.add_argument("--workers", type=int)
    sub.add_argument("--timings", action="store_true", default=None)
    sub.add_argument("--allow-dependent", dest="allow_dependent", action="store_true", default=None)
    sub.add_argument("--verbose", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corner-lab", description="Finite-field corner counting laboratory.")
    parser.add_argument("--config", help="JSON file mirroring RunConfig; explicit flags override it")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        _add_common(subparsers.add_parser(name, help=help_text))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < config file < explicit flags."""
    merged = {f.name: getattr(RunConfig(), f.name) for f in fields(RunConfig)}
    if args.config is not None:
        merged.update(_load_config(args.config))
    merged.update({k: v for k, v in vars(args).items() if v is not None and k in merged})
    return RunConfig(**merged)


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        config = resolve_config(args)
        if config.verbose:
            set_log_level("DEBUG")
        logger.debug(f"Running {config}.")
        handler, _ = COMMANDS[config.command]
        code = handler(config)
    except BadPrimeExit as e:
        logger.error(f"Bad prime: {e}")
        return EXIT_BAD_PRIME
    except NumericalHealthError as e:
        logger.error(f"Numerical health failure: {e}")
        return EXIT_NUMERICAL
    except InvariantViolationError as e:
        logger.error(f"Invariant violation: {e}")
        return EXIT_INVARIANT
    except (ExpressionSyntaxError, ZeroDenominatorError, ValueError, OSError, CornerLabError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INVALID_INPUT
    logger.debug(f"{args.command} finished in {format_time(time.perf_counter() - t0)}.")
    return code


if __name__ == "__main__":
    sys.exit(main())
