"""Batch experiment driver.

Each subcommand reads a JSON config, fills in defaults, runs, and writes a CSV
and a JSON file that both carry the fully resolved config. Exit status: 0 on
success, 2 for configuration errors, 3 when an enumeration cap is hit, 4 for
internal invariant violations.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .codes import BlockSpec, CosetCode, NqlcPair, appendix_alpha, combine_codes
from .gf import FieldError, PrimeField, random_matrix, random_vec
from .probspace import CapacityError, Pmf, TypeVector, entropy, l_fold, lin_comb_pmf, type_class, typical_set
from .region import (
    RatePoint, RegionParams, SearchSpec, converse_bounds, example2_channel, feasible, lemma5_candidate, lemma5_rates,
    search_region,
)
from .simulate import (
    Example1Config, SchemeConfig, SchemeError, check_appendixB_conditions, run_example1, run_trials,
)

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_INTERNAL = 0, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class Config:
    """Raw JSON text plus parsed body, with field-level validation helpers."""

    def __init__(self, text: str, source: str = "<config>"):
        self.text = text
        self.source = source
        try:
            self.body = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as e:
            raise ConfigError(e.msg, line=e.lineno) from e
        if not isinstance(self.body, dict):
            raise ConfigError("top level must be a JSON object")

    def line_of(self, key: str) -> int | None:
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def fail(self, key: str, message: str):
        raise ConfigError(message, field=key, line=self.line_of(key.split(".")[-1]))

    def check_keys(self, allowed: set[str], required: set[str] = frozenset()):
        for k in self.body:
            if k not in allowed:
                self.fail(k, f"unknown key (allowed: {', '.join(sorted(allowed))})")
        for k in required:
            if k not in self.body:
                raise ConfigError("missing required key", field=k)

    def get(self, key, default=None):
        return self.body.get(key, default)

    def field(self) -> PrimeField:
        try:
            return PrimeField(int(self.body["q"]))
        except KeyError:
            raise ConfigError("missing required key", field="q")
        except (FieldError, TypeError, ValueError) as e:
            self.fail("q", str(e))

    def pmf(self, key: str, f: PrimeField, value=None) -> Pmf:
        raw = self.body.get(key) if value is None else value
        if raw is None:
            raise ConfigError("missing required key", field=key)
        try:
            return Pmf.from_literal(f, raw)
        except (ValueError, TypeError, FieldError) as e:
            self.fail(key, f"invalid pmf {raw!r}: {e}")

    def number(self, key: str, default, kind=float, lo=None, hi=None):
        raw = self.body.get(key, default)
        try:
            v = kind(raw)
        except (TypeError, ValueError):
            self.fail(key, f"expected a {kind.__name__}, got {raw!r}")
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            self.fail(key, f"value {v} outside [{lo}, {hi}]")
        return v


# --- output ------------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    if isinstance(v, (list, tuple)):
        return json.dumps([float(f"{x:.9g}") if isinstance(x, float) else x for x in v])
    return str(v)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    return o


class Output:
    def __init__(self, name: str, resolved: dict, seed, out_dir: Path | None):
        self.name = name
        self.resolved = resolved
        self.seed = seed
        self.out_dir = out_dir
        self.stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def header(self) -> list[str]:
        return [
            f"# subcommand: {self.name}",
            f"# config: {json.dumps(_jsonable(self.resolved), sort_keys=True)}",
            f"# seed: {self.seed}",
            f"# generated: {self.stamp}",
        ]

    def csv_text(self, rows: list[dict]) -> str:
        buf = io.StringIO()
        cols: list[str] = []
        for r in rows:
            cols += [c for c in r if c not in cols]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in cols])
        return "\n".join(self.header()) + "\n" + buf.getvalue()

    def _write(self, path: Path, text: str):
        try:
            with open(path, "x", encoding="utf-8") as fh:
                fh.write(text)
        except FileExistsError:
            raise ConfigError(f"output {path} already exists; outputs are write-once")

    def emit(self, rows: list[dict], result: dict, extra_csv: dict[str, list[dict]] | None = None):
        text = self.csv_text(rows)
        if self.out_dir is None:
            sys.stdout.write(text)
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        targets = [self.out_dir / f"{self.name}.csv", self.out_dir / f"{self.name}.json"]
        targets += [self.out_dir / f"{self.name}_{k}.csv" for k in (extra_csv or {})]
        for t in targets:
            if t.exists():
                raise ConfigError(f"output {t} already exists; outputs are write-once")
        self._write(targets[0], text)
        doc = {"subcommand": self.name, "config": self.resolved, "seed": self.seed, "generated": self.stamp,
               "result": result}
        self._write(targets[1], json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")
        for k, extra in (extra_csv or {}).items():
            self._write(self.out_dir / f"{self.name}_{k}.csv", self.csv_text(extra))


# --- subcommands -------------------------------------------------------------


def cmd_entropy(cfg: Config, args):
    cfg.check_keys({"q", "pmfs", "combinations", "folds"}, {"q", "pmfs"})
    f = cfg.field()
    pmfs = cfg.get("pmfs")
    if not isinstance(pmfs, dict) or not pmfs:
        cfg.fail("pmfs", "expected a non-empty object of name -> probability list")
    P = {name: cfg.pmf(name, f, value=v) for name, v in pmfs.items()}
    rows = [{"expression": name, "pmf": p.tolist(), "entropy": entropy(p)} for name, p in P.items()]
    for combo in cfg.get("combinations", []):
        try:
            a, x, b, y = combo
            p = lin_comb_pmf(int(a), P[x], int(b), P[y])
        except (ValueError, KeyError, TypeError) as e:
            cfg.fail("combinations", f"entry {combo!r} must be [alpha, name, beta, name]: {e}")
        rows.append({"expression": f"{a}*{x}+{b}*{y}", "pmf": p.tolist(), "entropy": entropy(p)})
    for fold in cfg.get("folds", []):
        try:
            x, l = fold
            p = l_fold(P[x], int(l))
        except (ValueError, KeyError, TypeError) as e:
            cfg.fail("folds", f"entry {fold!r} must be [name, l]: {e}")
        rows.append({"expression": f"{l}-fold {x}", "pmf": p.tolist(), "entropy": entropy(p)})
    resolved = {"q": f.q, "pmfs": {k: v.tolist() for k, v in P.items()},
                "combinations": cfg.get("combinations", []), "folds": cfg.get("folds", [])}
    return resolved, rows, {"rows": rows}, None


def _as_list(v):
    return v if isinstance(v, list) else [v]


def cmd_typical(cfg: Config, args):
    cfg.check_keys({"q", "pmf", "n", "eps"}, {"q", "pmf", "n", "eps"})
    f = cfg.field()
    p = cfg.pmf("pmf", f)
    ns = [int(v) for v in _as_list(cfg.get("n"))]
    epss = [float(v) for v in _as_list(cfg.get("eps"))]
    if any(n < 1 for n in ns) or any(e < 0 for e in epss):
        cfg.fail("n", "n must be >= 1 and eps >= 0")
    rows = []
    for n in ns:
        for e in epss:
            size = typical_set(p, n, e).size()
            rows.append({"n": n, "eps": e, "size": size, "rate": math.log2(size) / n if size else float("-inf"),
                         "entropy": entropy(p)})
    resolved = {"q": f.q, "pmf": p.tolist(), "n": ns, "eps": epss}
    return resolved, rows, {"rows": rows}, None


def cmd_sumset(cfg: Config, args):
    cfg.check_keys({"q", "n", "k", "seed", "draws", "type"}, {"q", "n", "k"})
    f = cfg.field()
    n = cfg.number("n", None, int, 1)
    k = cfg.number("k", None, int, 1, n)
    draws = cfg.number("draws", 5, int, 1)
    seed = args.seed if args.seed is not None else cfg.number("seed", 0, int)
    t = cfg.get("type") or [n] + [0] * (f.q - 1)
    try:
        P_t = type_class(TypeVector(n, t))
    except (ValueError, TypeError) as e:
        cfg.fail("type", str(e))
    rows = []
    for d in range(draws):
        G = random_matrix(k, n, f, seed=[seed, d, 0])
        C = CosetCode(f, G, random_vec(n, f, seed=[seed, d, 1]))
        one = combine_codes(1, C, 1, P_t.enumerate()).size
        two = combine_codes(1, combine_codes(1, C, 1, C), 1, P_t.enumerate()).size
        rows.append({"draw": d, "kind": "identical", "sum_CS": one, "sum_CCS": two, "equal": one == two})
        C2 = CosetCode(f, random_matrix(k, n, f, seed=[seed, d, 2]), random_vec(n, f, seed=[seed, d, 3]))
        C3 = CosetCode(f, random_matrix(k, n, f, seed=[seed, d, 4]), random_vec(n, f, seed=[seed, d, 5]))
        ind = appendix_alpha(C, C2, C3, P_t, f)
        rows.append({"draw": d, "kind": "independent", "sum_12S": ind["sum_12S"], "sum_123S": ind["sum_123S"],
                     "size_C3": ind["size_C3"], "alpha": ind["alpha"]})
    resolved = {"q": f.q, "n": n, "k": k, "seed": seed, "draws": draws, "type": list(t)}
    return resolved, rows, {"rows": rows}, None


def cmd_lemma4(cfg: Config, args):
    cfg.check_keys({"q", "n", "blocks", "eps", "seeds", "seed", "pairs"}, {"q", "n", "blocks"})
    f = cfg.field()
    n = cfg.number("n", None, int, 1)
    eps = cfg.number("eps", 0.5, float, 0)
    seeds = cfg.number("seeds", 50, int, 1)
    base = args.seed if args.seed is not None else cfg.number("seed", 0, int)
    pairs = [tuple(int(x) for x in p) for p in cfg.get("pairs", [[a, b] for a in range(1, f.q) for b in range(1, f.q)])]
    specs, specs2 = [], []
    for i, blk in enumerate(cfg.get("blocks")):
        try:
            kk = int(blk["k"])
            specs.append(BlockSpec(kk, cfg.pmf(f"blocks[{i}].V", f, value=blk["V"]), eps))
            specs2.append(BlockSpec(kk, cfg.pmf(f"blocks[{i}].V2", f, value=blk["V2"]), eps))
        except (KeyError, TypeError) as e:
            cfg.fail("blocks", f"block {i} needs k, V, V2: {e}")
    rows = []
    for s in range(seeds):
        pair = NqlcPair.random(f, n, specs, specs2, seed=[base, s])
        C1, C2 = pair.components()
        for a, b in pairs:
            realized = combine_codes(a, C1, b, C2).rate
            predicted = pair.predicted_rate(a, b)
            rows.append({"seed": s, "alpha": a, "beta": b, "realized": realized, "predicted": predicted,
                         "abs_diff": abs(realized - predicted)})
    resolved = {"q": f.q, "n": n, "eps": eps, "seeds": seeds, "seed": base, "pairs": [list(p) for p in pairs],
                "blocks": [{"k": s.k, "V": s.pmf.tolist(), "V2": s2.pmf.tolist()} for s, s2 in zip(specs, specs2)]}
    within = sum(r["abs_diff"] <= 0.15 for r in rows) / len(rows)
    return resolved, rows, {"rows": rows, "fraction_within_0.15": within}, None


def _example2_inputs(cfg: Config):
    f = cfg.field()
    return f, {k: cfg.pmf(k, f) for k in ("N1", "N2", "N3", "V1", "V2")}


def cmd_rates(cfg: Config, args):
    cfg.check_keys({"q", "N1", "N2", "N3", "V1", "V2"}, {"q", "N1", "N2", "N3", "V1", "V2"})
    f, P = _example2_inputs(cfg)
    try:
        res = lemma5_rates(f.q, P["N1"], P["N2"], P["N3"], P["V1"], P["V2"])
    except ValueError as e:
        raise ConfigError(str(e))
    cb = converse_bounds("example2", P["N1"], P["N2"], P["N3"])
    p = res.point
    table = {"R1": p.R1, "R2": p.R2, "R3": p.R3, "R2+R3": p.R2 + p.R3, "baseline": res.baseline,
             "improvement": p.R2 + p.R3 - res.baseline, "margin_formula": res.margin,
             "R1+R2": p.R1 + p.R2, "k1_over_n": res.detail["k1_over_n"],
             "V3_target_entropy": res.v3_target_entropy, **cb}
    rows = [{"quantity": k, "value": v} for k, v in table.items()]
    rows.append({"quantity": "feasible_parameterization", "value": res.feasible_parameterization})
    resolved = {"q": f.q, **{k: v.tolist() for k, v in P.items()}}
    return resolved, rows, {"lemma5": res.to_dict(), "converse": cb}, None


def _scheme_config(cfg: Config, args, extra=()) -> SchemeConfig:
    allowed = {"q", "n", "V1", "V2", "V3", "N1", "N2", "N3", "gamma", "eps", "trials", "seed"} | set(extra)
    cfg.check_keys(allowed, {"q", "V1", "V2", "N1", "N2", "N3"})
    f = cfg.field()
    if f.q < 3:
        cfg.fail("q", "the scheme needs q >= 3")
    P = {k: cfg.pmf(k, f) for k in ("V1", "V2", "N1", "N2", "N3")}
    if cfg.get("V3") is not None:
        P["V3"] = cfg.pmf("V3", f)
    seed = args.seed if args.seed is not None else cfg.number("seed", 0, int)
    return SchemeConfig(q=f.q, n=cfg.number("n", 18, int, 1), gamma=cfg.number("gamma", 0.9, float, 1e-9),
                        eps=cfg.number("eps", 0.5, float, 0), trials=cfg.number("trials", 2000, int, 0),
                        seed=seed, **P)


def cmd_conditions(cfg: Config, args):
    sc = _scheme_config(cfg, args)
    rep = check_appendixB_conditions(sc)
    from .simulate import realized_k1

    k1 = realized_k1(sc)
    rep_r = check_appendixB_conditions(sc, k1 / sc.n)
    rows = []
    for label, r in (("exact", rep), (f"realized_k1={k1}", rep_r)):
        for c in r.conditions:
            rows.append({"k1": label, **c.to_dict()})
    return sc.to_dict(), rows, {"exact": rep.to_dict(), "realized": rep_r.to_dict(), "k1": k1}, None


def cmd_simulate(cfg: Config, args):
    scheme = cfg.get("scheme", "appendixB")
    if scheme == "example1":
        cfg.check_keys({"scheme", "q", "N1", "N3", "gamma", "n", "trials", "seed", "modes", "x3_gap"},
                       {"q", "N1", "N3"})
        f = cfg.field()
        seed = args.seed if args.seed is not None else cfg.number("seed", 0, int)
        e1 = Example1Config(f.q, cfg.pmf("N1", f), cfg.pmf("N3", f), cfg.number("gamma", 0.8, float, 1e-9, 1),
                            cfg.number("n", 18, int, 1), cfg.number("trials", 2000, int, 0), seed,
                            cfg.number("x3_gap", 0.05, float, 0))
        modes = _as_list(cfg.get("modes", ["aligned", "control"]))
        reports = [run_example1(e1, m, args.workers) for m in modes]
        resolved = {"scheme": "example1", **e1.to_dict(), "modes": modes}
    elif scheme == "appendixB":
        sc = _scheme_config(cfg, args, extra={"scheme", "n_values", "force"})
        ns = [int(v) for v in _as_list(cfg.get("n_values", [sc.n]))]
        force = bool(cfg.get("force", False))
        reports = [run_trials(sc.replace(n=n), args.workers, force=force) for n in ns]
        resolved = {"scheme": "appendixB", **sc.to_dict(), "n_values": ns, "force": force}
    else:
        cfg.fail("scheme", f"unknown scheme {scheme!r} (appendixB or example1)")
    rows = [r for rep in reports for r in rep.rows()]
    plot = [{"label": r["label"], "n": r["n"], "decoder": r["decoder"], "stage": r["stage"], "rate": r["rate"],
             "wilson_lo": r["wilson_lo"], "wilson_hi": r["wilson_hi"]} for r in rows]
    return resolved, rows, {"reports": [rep.to_dict() for rep in reports]}, {"plot": plot}


def cmd_region(cfg: Config, args):
    cfg.check_keys({"mode", "q", "N1", "N2", "N3", "V1", "V2", "params", "point", "search", "lemma5_seed", "seed",
                    "gamma"}, {"q", "N1", "N2", "N3"})
    f = cfg.field()
    N = {k: cfg.pmf(k, f) for k in ("N1", "N2", "N3")}
    ch = example2_channel(f.q, N["N1"], N["N2"], N["N3"])
    mode = cfg.get("mode", "search")
    seed = args.seed if args.seed is not None else cfg.number("seed", 0, int)
    base = {"q": f.q, **{k: v.tolist() for k, v in N.items()}, "mode": mode, "seed": seed}
    if mode == "feasible":
        try:
            params = RegionParams.from_dict({"q": f.q, **cfg.get("params")})
            point = RatePoint(**cfg.get("point"))
        except (TypeError, KeyError, ValueError, FieldError) as e:
            cfg.fail("params", f"invalid region parameters: {e}")
        v = feasible(ch, params, point)
        rows = [{"constraint": k, "margin": m, "ok": v.ok(k, m)} for k, m in v.margins.items()]
        rows.append({"constraint": "verdict", "margin": "", "ok": v.feasible})
        resolved = {**base, "params": params.to_dict(), "point": point.to_dict()}
        return resolved, rows, v.to_dict(), None
    if mode != "search":
        cfg.fail("mode", f"unknown mode {mode!r} (feasible or search)")
    try:
        spec = SearchSpec.from_dict(cfg.get("search", {}))
    except (ValueError, TypeError) as e:
        cfg.fail("search", str(e))
    seeds = []
    resolved = {**base, "search": spec.to_dict()}
    if cfg.get("lemma5_seed", True) and "V1" in cfg.body:
        V1, V2 = cfg.pmf("V1", f), cfg.pmf("V2", f)
        gamma = cfg.number("gamma", 0.9, float, 0, 1)
        seeds.append(lemma5_candidate(f.q, N["N1"], N["N2"], N["N3"], V1, V2, gamma))
        resolved.update(V1=V1.tolist(), V2=V2.tolist(), gamma=gamma, lemma5_seed=True)
    res = search_region(ch, spec, seed, seeds=seeds, workers=args.workers)
    rows = [{"series": series, "family": p.family, **p.point.to_dict(), "witness_id": p.witness_id}
            for series, pts in (("full", res.points), ("nlc", res.nlc_points)) for p in pts]
    rows += [{"series": "hull", "family": "", **p.to_dict(), "witness_id": f"hull-{i}"}
             for i, p in enumerate(res.hull)]
    plot = [{"R1": r["R1"], "R2": r["R2"], "R3": r["R3"], "witness_id": r["witness_id"], "series": r["series"]}
            for r in rows]
    return resolved, rows, res.to_dict(), {"pareto": plot}


COMMANDS = {
    "entropy": cmd_entropy, "typical": cmd_typical, "sumset": cmd_sumset, "lemma4": cmd_lemma4,
    "rates": cmd_rates, "conditions": cmd_conditions, "simulate": cmd_simulate, "region": cmd_region,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qlcic", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="JSON config file")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--out", type=Path, help="output directory (stdout CSV if omitted)")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--emit-plot-data", action="store_true", help="also write plot-ready CSV files")
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="--seed")
        if args.workers < 1:
            raise ConfigError("workers must be >= 1", field="--workers")
        text = args.config.read_text(encoding="utf-8") if args.config else "{}"
        cfg = Config(text, str(args.config))
        resolved, rows, result, extra = COMMANDS[args.command](cfg, args)
        seed = resolved.get("seed", args.seed)
        out = Output(args.command, resolved, seed, args.out)
        out.emit(rows, result, extra if args.emit_plot_data else None)
        return EXIT_OK
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemeError as e:
        print(f"config error: {e}", file=sys.stderr)
        if e.report is not None:
            for c in e.report.conditions:
                print(f"  {c.name}: lhs={c.lhs:.9g} rhs={c.rhs:.9g} margin={c.margin:.9g}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return EXIT_CAP
    except (FieldError, ValueError, KeyError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
