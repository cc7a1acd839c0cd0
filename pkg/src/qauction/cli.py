"""Scenario runner emitting deterministic CSV curves.

Subcommands: converge, variants, gap, attack, povm, circuit-verify.
Exit codes: 0 success, 1 configuration/parse error, 2 simulation contract
violation (e.g. a payoff tie). Options may come from a flat key-value
config file (``key = value``, ``#`` comments) overridden by flags; unknown
config keys are hard errors. CSV uses 12 significant digits, one header
row, and ``#`` comment lines for resolved settings, so identical
(config, seed) pairs give identical bytes.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import adversary, circuits, protocol
from .core import ContractViolation
from .protocol import AdiabaticSchedule, AuctionConfig, TieError


class ConfigError(ValueError):
    pass


_TABLES = ("first_price", "spurious")
_ATTACKS = ("none", "probe_basis", "probe_povm", "spurious")
_DEFENSES = ("none", "lock", "collude")

# key -> (parser, default)
_KEY_SPECS = {
    "bids": (str, "10,11"),
    "steps": (int, 20),
    "delta": (str, "1.5"),          # float or "auto" (= 1/sqrt(steps))
    "variant": (str, "zeroth"),
    "table": (str, "first_price"),
    "attack": (str, "none"),
    "defense": (str, "none"),
    "alpha1": (float, None),
    "alpha2": (float, None),
    "seed": (int, 0),
    "trials": (int, 100_000),
    "rounds": (int, 20),
    "restarts": (int, 20),
    "restrict": (str, "true"),
    "jobs": (int, 1),
    "out": (str, None),
}


@dataclass
class ScenarioConfig:
    bids: list[str]
    steps: int
    delta: float
    variant: str
    table: str
    attack: str
    defense: str
    alpha1: float | None
    alpha2: float | None
    seed: int
    trials: int
    rounds: int
    restarts: int
    restrict: bool
    jobs: int
    out: str | None

    def schedule(self, variant: str | None = None) -> AdiabaticSchedule:
        return AdiabaticSchedule(steps=self.steps, delta=self.delta,
                                 variant=variant or self.variant)

    def payoff_table(self) -> protocol.PayoffTable:
        if self.table == "spurious":
            if [len(b) for b in self.bids] != [2, 2]:
                raise ConfigError("the spurious table is defined for two 2-qubit bidders")
            return adversary.spurious_table()
        p = len(self.bids[0])
        return protocol.build_first_price_table(AuctionConfig(m=len(self.bids), p=p))

    def locking(self) -> adversary.LockingPair:
        if self.alpha1 is None or self.alpha2 is None:
            raise ConfigError("defense=lock needs alpha1 and alpha2 in (0, 1]")
        try:
            return adversary.locking_operators(self.alpha1, self.alpha2, self.bids)
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from exc


def _parse_bool(raw: str) -> bool:
    low = str(raw).strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def read_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_SPECS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    raw = {key: default for key, (_, default) in _KEY_SPECS.items()}
    if getattr(args, "config", None):
        raw.update(read_config_file(args.config))
    for key in _KEY_SPECS:
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = flag

    def typed(key):
        parse, _ = _KEY_SPECS[key]
        value = raw[key]
        if value is None or not isinstance(value, str):
            return value
        try:
            return parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc

    bids = [b.strip() for b in str(raw["bids"]).split(",") if b.strip()]
    if not bids:
        raise ConfigError("need at least one bid")
    for b in bids:
        try:
            protocol.BidSpec(b)
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from exc
    if len({len(b) for b in bids}) != 1:
        raise ConfigError("bids must share a register width")

    steps = typed("steps")
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    delta_raw = str(raw["delta"]).strip().lower()
    if delta_raw == "auto":
        delta = protocol.auto_delta(steps)
    else:
        try:
            delta = float(delta_raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for delta: {raw['delta']!r}") from exc
    if not delta > 0:
        raise ConfigError("delta must be positive")

    cfg = ScenarioConfig(
        bids=bids, steps=steps, delta=delta,
        variant=str(raw["variant"]), table=str(raw["table"]),
        attack=str(raw["attack"]), defense=str(raw["defense"]),
        alpha1=typed("alpha1"), alpha2=typed("alpha2"),
        seed=typed("seed"), trials=typed("trials"), rounds=typed("rounds"),
        restarts=typed("restarts"), restrict=_parse_bool(raw["restrict"]),
        jobs=typed("jobs"), out=raw["out"],
    )
    if cfg.variant not in protocol.VARIANTS:
        raise ConfigError(f"variant must be one of {protocol.VARIANTS}")
    if cfg.table not in _TABLES:
        raise ConfigError(f"table must be one of {_TABLES}")
    if cfg.attack not in _ATTACKS:
        raise ConfigError(f"attack must be one of {_ATTACKS}")
    if cfg.defense not in _DEFENSES:
        raise ConfigError(f"defense must be one of {_DEFENSES}")
    if cfg.trials < 1 or cfg.rounds < 1 or cfg.jobs < 1 or cfg.restarts < 0:
        raise ConfigError("trials, rounds and jobs must be positive; restarts nonnegative")
    return cfg


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _render_csv(meta: dict, header: list[str], rows: list[tuple],
                trailing: dict | None = None) -> str:
    lines = [f"# {key}={value}" for key, value in meta.items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    for key, value in (trailing or {}).items():
        lines.append(f"# {key}={_fmt(value)}")
    return "\n".join(lines) + "\n"


def _meta(cfg: ScenarioConfig, command: str, **extra) -> dict:
    meta = {
        "command": command,
        "bids": ",".join(cfg.bids),
        "steps": cfg.steps,
        "delta": _fmt(cfg.delta),
        "variant": cfg.variant,
        "table": cfg.table,
        "attack": cfg.attack,
        "defense": cfg.defense,
        "seed": cfg.seed,
    }
    if cfg.defense == "lock":
        meta["alpha1"], meta["alpha2"] = _fmt(cfg.alpha1), _fmt(cfg.alpha2)
    meta.update(extra)
    return meta


def _run_for_config(cfg: ScenarioConfig, table, schedule) -> protocol.Trajectory:
    if cfg.defense == "lock":
        return adversary.run_locked_auction(cfg.bids, table, schedule, cfg.locking())
    if cfg.defense == "collude":
        return adversary.run_collusion_defense(cfg.bids, table, schedule)
    return protocol.run_adiabatic(cfg.bids, table, schedule)


def _total_qubits(cfg: ScenarioConfig) -> int:
    return len(cfg.bids) * len(cfg.bids[0])


def cmd_converge(cfg: ScenarioConfig) -> str:
    if cfg.attack != "none":
        raise ConfigError("converge runs the honest schedule; use the attack subcommand")
    traj = _run_for_config(cfg, cfg.payoff_table(), cfg.schedule())
    rows = [(st.s, st.f, st.success_probability, st.subspace_leakage) for st in traj.steps]
    winner = format(traj.winner_index, f"0{_total_qubits(cfg)}b")
    return _render_csv(_meta(cfg, "converge", winner=winner),
                       ["s", "f", "success_prob", "leakage"], rows)


def cmd_variants(cfg: ScenarioConfig) -> str:
    if cfg.attack != "none" or cfg.defense != "none":
        raise ConfigError("variants compares honest integrators only")
    table = cfg.payoff_table()
    curves = {}
    for variant in ("exact", "zeroth", "first"):
        curves[variant] = protocol.run_adiabatic(cfg.bids, table, cfg.schedule(variant)).success
    rows = []
    for s in range(cfg.steps + 1):
        rows.append((s, s / cfg.steps, curves["exact"][s], curves["zeroth"][s], curves["first"][s]))
    return _render_csv(_meta(cfg, "variants"), ["s", "f", "exact", "zeroth", "first"], rows)


def cmd_gap(cfg: ScenarioConfig) -> str:
    if cfg.attack != "none" or cfg.defense == "collude":
        raise ConfigError("gap tracks support defense in {none, lock}")
    schedule = cfg.schedule()
    if cfg.defense == "lock":
        schedule = dataclasses.replace(
            cfg.schedule("locked"), locking=cfg.locking().operators)
    tracks = protocol.eigenvalue_tracks(cfg.bids, cfg.payoff_table(), schedule,
                                        restrict=cfg.restrict)
    k = tracks.eigenvalues.shape[1]
    header = ["s", "f"] + [f"lambda{i}" for i in range(k)] + ["gap"]
    rows = []
    for s, (f, lams) in enumerate(zip(tracks.f_values, tracks.eigenvalues)):
        rows.append((s, f, *lams, lams[1] - lams[0]))
    return _render_csv(_meta(cfg, "gap", restrict=str(cfg.restrict).lower()),
                       header, rows, trailing={"g_min": tracks.g_min})


def _attack_point(args) -> tuple:
    """Worker for one Monte Carlo curve point (picklable for --jobs)."""
    n, seed, trials, basis_sets, povm_sets = args
    out = []
    for dists in basis_sets:
        out.append(adversary.basis_mc_point(dists, n, trials, seed))
    for per in povm_sets:
        out.append(adversary.povm_mc_point(per, n, trials, seed))
        out.append(adversary.majority_mc_point(per, n, trials, seed))
    return tuple(out)


def _probe_columns(cfg: ScenarioConfig) -> tuple[list[str], list[tuple], dict]:
    locked = cfg.locking() if cfg.defense == "lock" else None
    variants: list[tuple[str, adversary.LockingPair | None]] = [("", None)]
    if locked is not None:
        variants.append(("_lock", locked))

    header = ["N"]
    meta_extra: dict = {}
    closed_cols = []
    basis_sets, povm_sets = [], []
    rounds = np.arange(1, cfg.rounds + 1, dtype=float)
    for suffix, lock in variants:
        basis = adversary.probe_attack_basis(cfg.bids, cfg.rounds, locking=lock)
        alphas = adversary._lock_amplitudes(cfg.bids, lock)
        solved = adversary._povm_outcome_distributions(cfg.bids, lock, cfg.restarts, cfg.seed)
        per = [(dist, t) for dist, t, _ in solved]
        povm_closed = np.ones(cfg.rounds)
        for bidder, (_, _, p_e) in enumerate(solved):
            povm_closed *= 1.0 - p_e**rounds
            meta_extra[f"p_e{suffix}_bidder{bidder}"] = _fmt(p_e)
        closed_cols.append((basis.probabilities, povm_closed))
        basis_sets.append([adversary.locked_bidding_state(b, a).probabilities()
                           for b, a in zip(cfg.bids, alphas)])
        povm_sets.append(per)
        header += [f"basis_closed{suffix}", f"basis_mc{suffix}",
                   f"povm_closed{suffix}", f"povm_mc{suffix}", f"povm_mc_majority{suffix}"]

    jobs = [(n, cfg.seed, cfg.trials, basis_sets, povm_sets)
            for n in range(1, cfg.rounds + 1)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            mc_rows = list(pool.map(_attack_point, jobs))
    else:
        mc_rows = [_attack_point(job) for job in jobs]

    rows = []
    for idx, n in enumerate(range(1, cfg.rounds + 1)):
        mc = mc_rows[idx]
        row: list = [n]
        for v, (basis_closed, povm_closed) in enumerate(closed_cols):
            basis_mc = mc[v]
            povm_mc, povm_majority = mc[len(basis_sets) + 2 * v], mc[len(basis_sets) + 2 * v + 1]
            row += [basis_closed[idx], basis_mc, povm_closed[idx], povm_mc, povm_majority]
        rows.append(tuple(row))
    return header, rows, meta_extra


def cmd_attack(cfg: ScenarioConfig) -> str:
    if cfg.attack == "none":
        raise ConfigError("attack subcommand needs attack in {probe_basis, probe_povm, spurious}")
    if cfg.attack == "spurious":
        if cfg.defense not in ("none", "collude"):
            raise ConfigError("the spurious attack composes with defense in {none, collude}")
        cfg = dataclasses.replace(cfg, table="spurious")
        traj = _run_for_config(cfg, adversary.spurious_table(), cfg.schedule())
        reveal = adversary.revealing_index(cfg.bids)
        rows = [(st.s, st.f, st.success_probability, st.subspace_leakage,
                 float(st.state.probabilities()[reveal])) for st in traj.steps]
        revealing = format(reveal, f"0{_total_qubits(cfg)}b")
        return _render_csv(_meta(cfg, "attack", revealing=revealing),
                           ["s", "f", "success_prob", "leakage", "revealing_prob"], rows)
    if cfg.defense == "collude":
        raise ConfigError("probe attacks compose with defense in {none, lock}")
    if any(len(b) != 2 for b in cfg.bids) or len(cfg.bids) != 2:
        raise ConfigError("probe attacks are defined for two 2-qubit bidders")
    header, rows, extra = _probe_columns(cfg)
    return _render_csv(_meta(cfg, "attack", trials=cfg.trials, rounds=cfg.rounds, **extra),
                       header, rows)


def _fmt_complex(z: complex) -> str:
    return f"{z.real:.12g}{z.imag:+.12g}j"


def cmd_povm(cfg: ScenarioConfig) -> str:
    states = adversary.toy_bidding_states()
    priors = [1 / 3] * 3
    povm, p_e = adversary.min_error_povm(states, priors,
                                         restarts=cfg.restarts, seed=cfg.seed)
    ok = adversary.povm_optimality_check(povm, states, priors)
    lines = [
        f"# command=povm seed={cfg.seed} restarts={cfg.restarts}",
        f"P_e = {p_e:.12g}",
        f"optimality_check = {str(ok).lower()}",
    ]
    for i, element in enumerate(povm.elements):
        lines.append(f"element {i} (decides bid {adversary.TOY_BIDS[i]}):")
        for row in element:
            lines.append("  " + " ".join(_fmt_complex(z) for z in row))
    return "\n".join(lines) + "\n"


def _reference_circuit(kind: str, arg: str, width: int | None) -> circuits.Circuit:
    if kind == "bidder":
        return circuits.build_bidder_circuit(arg.strip())
    if kind == "d":
        parts = [p.strip() for p in arg.split(",")]
        if len(parts) not in (2, 3):
            raise ConfigError("target D takes delta,f[,n_qubits]")
        n = int(parts[2]) if len(parts) == 3 else width
        if n is None or n < 1:
            raise ConfigError("cannot infer the qubit count for target D; pass D:delta,f,n")
        return circuits.build_D_circuit(float(parts[0]), float(parts[1]), n)
    if kind == "p":
        parts = [p.strip() for p in arg.split(",")]
        if len(parts) != 2:
            raise ConfigError("target P takes delta,f (two-bidder first-price table)")
        table = protocol.build_first_price_table(AuctionConfig(m=2, p=2))
        expansion = protocol.pauli_z_expansion(table)
        return circuits.build_P_circuit(expansion, float(parts[0]), float(parts[1]), 4)
    if kind == "collusion":
        bits = [b.strip() for b in arg.split(",")]
        if len(bits) != 2:
            raise ConfigError("target collusion takes bid1,bid2")
        return circuits.build_collusion_circuit(bits[0], bits[1])
    raise ConfigError(f"unknown target kind {kind!r}; use bidder/D/P/collusion")


def _resolve_target(target: str, inferred_width: int | None):
    """Target string -> (register width, reference unitary)."""
    if ":" not in target:
        raise ConfigError(f"target must look like kind:args, got {target!r}")
    kind, _, arg = target.partition(":")
    kind = kind.strip().lower()
    if kind == "bidder":
        bid = protocol.BidSpec(arg.strip())
        return bid.n_qubits, protocol.bidding_operator(bid)
    if kind == "d":
        parts = [p.strip() for p in arg.split(",")]
        if len(parts) not in (2, 3):
            raise ConfigError("target D takes delta,f[,n_qubits]")
        delta, f = float(parts[0]), float(parts[1])
        width = int(parts[2]) if len(parts) == 3 else inferred_width
        if width is None or width < 1:
            raise ConfigError("cannot infer the qubit count for target D; pass D:delta,f,n")
        w = np.array([bin(x).count("1") for x in range(2**width)], dtype=float)
        return width, np.diag(np.exp(-1j * delta * f * w))
    if kind == "p":
        parts = [p.strip() for p in arg.split(",")]
        if len(parts) != 2:
            raise ConfigError("target P takes delta,f (two-bidder first-price table)")
        delta, f = float(parts[0]), float(parts[1])
        table = protocol.build_first_price_table(AuctionConfig(m=2, p=2))
        return 4, np.diag(np.exp(-1j * delta * f * (-table.values)))
    if kind == "collusion":
        bits = [b.strip() for b in arg.split(",")]
        if len(bits) != 2:
            raise ConfigError("target collusion takes bid1,bid2")
        target_circuit = circuits.build_collusion_circuit(bits[0], bits[1])
        return 4, circuits.circuit_to_matrix(target_circuit)
    raise ConfigError(f"unknown target kind {kind!r}; use bidder/D/P/collusion")


def cmd_circuit_verify(args: argparse.Namespace) -> str:
    if args.emit:
        if args.circuit is not None:
            raise ConfigError("--emit prints the reference circuit; no circuit file expected")
        kind, _, arg = args.target.partition(":")
        return _reference_circuit(kind.strip().lower(), arg, None).to_text()
    if args.circuit is None:
        raise ConfigError("circuit file required (or pass --emit)")
    try:
        with open(args.circuit, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read circuit file {args.circuit}: {exc}") from exc
    probe = None
    try:
        probe = circuits.parse_circuit(text)
    except circuits.CircuitParseError:
        pass  # maybe only the width was missing; retry once the target fixes it
    width, target = _resolve_target(args.target, probe.n_qubits if probe else None)
    circuit = circuits.parse_circuit(text, n_qubits=width)
    report = circuits.verify_circuit(circuit, target)
    verdict = "pass" if report.passed else "fail"
    return (f"target={args.target}\ndistance={report.distance:.12g}\n"
            f"tolerance={report.tolerance:.12g}\nresult={verdict}\n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); config errors are exit 1
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="qauction", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key-value config file")
        p.add_argument("--bids", help="comma-separated price states, e.g. 10,11")
        p.add_argument("--steps", help="iteration count S")
        p.add_argument("--delta", help="step size, or 'auto' for 1/sqrt(S)")
        p.add_argument("--variant", help="exact|zeroth|first|locked")
        p.add_argument("--table", help="first_price|spurious")
        p.add_argument("--attack", help="none|probe_basis|probe_povm|spurious")
        p.add_argument("--defense", help="none|lock|collude")
        p.add_argument("--alpha1", help="lock amplitude for bidder 1")
        p.add_argument("--alpha2", help="lock amplitude for bidder 2")
        p.add_argument("--seed", help="64-bit RNG seed (default 0)")
        p.add_argument("--trials", help="Monte Carlo trials per curve point")
        p.add_argument("--rounds", help="probe rounds N to sweep")
        p.add_argument("--restarts", help="random restarts of the POVM search")
        p.add_argument("--restrict", help="restrict gap tracks to the plausible span")
        p.add_argument("--jobs", help="parallel workers for Monte Carlo points")
        p.add_argument("--out", help="output path (default: stdout)")

    def run_with_config(a, func):
        cfg = resolve_config(a)
        return func(cfg), cfg.out

    for name, func in (("converge", cmd_converge), ("variants", cmd_variants),
                       ("gap", cmd_gap), ("attack", cmd_attack), ("povm", cmd_povm)):
        p = sub.add_parser(name)
        add_common(p)
        p.set_defaults(run=lambda a, f=func: run_with_config(a, f))

    p = sub.add_parser("circuit-verify")
    p.add_argument("circuit", nargs="?", help="circuit text file")
    p.add_argument("target", help="bidder:BITS | D:delta,f[,n] | P:delta,f | collusion:B1,B2")
    p.add_argument("--emit", action="store_true",
                   help="print the reference circuit for the target instead of verifying")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(run=lambda a: (cmd_circuit_verify(a), a.out))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        output, out_path = args.run(args)
    except (ConfigError, circuits.CircuitParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TieError, ContractViolation) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 2
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(output)
    else:
        sys.stdout.write(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
