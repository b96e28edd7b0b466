"""Command-line experiment runner.

    edgescat <command> --config cfg.json --out DIR [--threads N] [--seed U64]

Commands: dispersion, modes, scatter, ensemble, diffusion, trs-check.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from scipy import stats

from . import __version__
from .diffusion import (
    Gammas,
    evolve_rho,
    evolve_transmission_2x2,
    linear_fit,
    microscopic_vs_diffusion,
    sde_ensemble,
    sde_transmission,
)
from .disorder import CouplingStrengths, OuParams, PlanError, build_plan
from .io import config_hash, write_csv, write_json
from .scattering import (
    OpaqueSlabError,
    conductance,
    kramers_check,
    protected_inputs,
    scatter,
    trs_defects,
)
from .spectral import Grid, MassProfile, ProfileKind, ResolutionError, discretize_ladder, transverse_spectrum
from .transport import IntegrationError, IntegratorConfig, propagate_ensemble
from .waveguide import BlockConfig, ThresholdError, assemble_system, dispersion_table

__all__ = ["main", "DEFAULTS", "load_config", "ConfigError"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "blocks": {"m_tau_plus": 1, "n_tau_minus": 0, "m_o_plus": 0, "n_o_minus": 0, "trs": False},
    "lambda": 5.0,
    "smoothing": 0.2,
    "energy": 4.0,
    "grid": {"points": 1201, "half_width": None, "modes": 8},
    "coupling": {"gamma12": 1.0, "gamma13": 1.0, "gamma23": 1.0, "gamma_zero": 1.0, "gamma_diag": 0.0,
                 "trs_plan": None},
    "ou": {"relaxation": 1.0, "stddev": 1.0},
    "epsilon": 0.01,
    "length": 1.0,
    "ensemble": 100,
    "seed": 0,
    "integrator": {"step": None, "method": "magnus2", "flux_tol": 1e-8},
    "dispersion": {"zeta_min": -5.0, "zeta_max": 5.0, "zeta_points": 101, "levels": [-3, -2, -1, 0, 1, 2, 3]},
    "diffusion": {"gammas": [1.0, 1.0, 1.0], "lengths": [1.0, 2.0, 5.0, 10.0], "sde_samples": 10000,
                  "dt": 1e-3, "epsilons": [], "micro_realizations": 200, "micro_lengths": [0.5, 1.0]},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _schema() -> dict:
    return json.loads(resources.files("edgescat").joinpath("config_schema.json").read_text())


def load_config(path: str | Path | None, seed: int | None = None) -> dict:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config does not match schema: {exc.message}") from exc
    cfg = _merge(DEFAULTS, raw)
    cfg.pop("output", None)
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg["seed"] = int(seed)
    if "lengths" not in cfg:
        cfg["lengths"] = [cfg["length"]]
    return cfg


class Setup:
    """Spectral bases, mode system and coupling plan built from a config."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.blocks = BlockConfig(**cfg["blocks"])
        E = float(cfg["energy"])
        kinds = []
        b = self.blocks
        if b.m_tau_plus + b.n_tau_minus:
            kinds.append(ProfileKind.TAU)
        if b.m_o_plus + b.n_o_minus:
            kinds.append(ProfileKind.O)
        profiles = {k: MassProfile(k, cfg["lambda"], cfg["smoothing"]) for k in kinds}
        g = cfg["grid"]
        if g["half_width"] is None:
            width = max(Grid.for_profile(p, g["points"]).half_width for p in profiles.values())
        else:
            width = g["half_width"]
        self.grid = Grid(width, g["points"])
        self.bases = {}
        for k, p in profiles.items():
            ladder = discretize_ladder(p, self.grid)
            count = g["modes"]
            basis = transverse_spectrum(ladder, count)
            while basis.eigenvalues[-1] <= E * E:
                count *= 2
                basis = transverse_spectrum(ladder, count)
            self.bases[k] = basis
        self.system = assemble_system(self.blocks, self.bases, E)
        c = cfg["coupling"]
        self.strengths = CouplingStrengths(c["gamma12"], c["gamma13"], c["gamma23"], c["gamma_zero"],
                                           c["gamma_diag"])
        self.plan = build_plan(self.system, self.strengths, c["trs_plan"])
        self.ou = OuParams(cfg["ou"]["relaxation"], cfg["ou"]["stddev"], cfg["seed"])
        i = cfg["integrator"]
        self.integrator = IntegratorConfig(i["step"], i["method"], i["flux_tol"])


def _provenance(cfg: dict, seeds) -> dict:
    return {"config_sha256": config_hash(cfg), "version": __version__,
            "seeds": ",".join(str(s) for s in seeds)}


def cmd_dispersion(cfg: dict, out: Path, threads: int) -> int:
    d = cfg["dispersion"]
    p = MassProfile(ProfileKind.TAU, cfg["lambda"], cfg["smoothing"])
    grid = Grid.for_profile(p, cfg["grid"]["points"], cfg["grid"]["half_width"])
    levels = d["levels"]
    count = max([abs(l) for l in levels] + [0]) + 1
    basis = transverse_spectrum(discretize_ladder(p, grid), count)
    zeta = np.linspace(d["zeta_min"], d["zeta_max"], d["zeta_points"])
    table = dispersion_table(basis, zeta, levels)
    write_csv(out / "dispersion.csv", table.header(), table.rows() if levels else [], _provenance(cfg, []))
    return EXIT_OK


def cmd_modes(cfg: dict, out: Path, threads: int) -> int:
    s = Setup(cfg)
    sysm = s.system
    modes = [{"index": i, "block": m.block_id, "kind": m.kind.value, "k": m.k_index, "zeta": m.zeta,
              "direction": m.direction, "current": m.current, "c": m.c_coef, "s": m.s_coef}
             for i, m in enumerate(sysm.modes)]
    evan = [{"block": e.block_id, "k": e.k_index, "decay_rate": e.decay_rate, "theta": [e.theta.real, e.theta.imag]}
            for bm in sysm.blocks for e in bm.evanescent]
    blocks = [{"block": bm.block.block_id, "label": bm.block.label, "propagating": len(bm.propagating)}
              for bm in sysm.blocks]
    payload = {"energy": sysm.energy, "total_propagating": sysm.total_propagating, "eps_diag": sysm.eps_diag,
               "index": sysm.index, "index2": sysm.index2, "blocks": blocks, "modes": modes,
               "evanescent": evan, "plan": s.plan.to_json(),
               "eigenvalues": {k.value: b.eigenvalues for k, b in s.bases.items()}}
    write_json(out / "modes.json", payload, _provenance(cfg, []))
    return EXIT_OK


def _complex(A: np.ndarray) -> dict:
    return {"re": A.real, "im": A.imag}


def _realization_rows(s: Setup, res, c: int, include_trs: bool):
    rows, details = [], []
    tol = s.integrator.flux_tol * max(1.0, float(res.lengths[c]))
    for r, idx in enumerate(res.indices):
        flux = float(res.flux_defects[c, r])
        row = {"index": int(idx), "length": float(res.lengths[c]), "status": "ok", "flux_defect": flux}
        try:
            S = scatter(res.P[c, r], res.eps_diag)
        except OpaqueSlabError:
            row["status"] = "opaque"
            rows.append(row)
            continue
        if flux > tol:
            row["status"] = "flux"
        rep = conductance(S)
        ker = protected_inputs(S)
        resid = float(np.linalg.norm(S.r_plus @ ker, 2)) if ker.size and S.r_plus.size else 0.0
        row.update({"g_plus": rep.g_plus, "g_minus": rep.g_minus, "t_eig_max": float(rep.eigenvalues[0]),
                    "t_eig_min": float(rep.eigenvalues[-1]), "protected_dim": rep.protected_dim,
                    "protected_residual": resid, "unitarity_defect": S.unitarity_defect(),
                    "reflection_power": float(np.sum(np.abs(S.r_plus) ** 2))})
        if include_trs:
            row.update(trs_defects(S, s.system).as_dict())
        rows.append(row)
        details.append({"index": int(idx), "r_plus": _complex(S.r_plus), "t_plus": _complex(S.t_plus),
                        "r_minus": _complex(S.r_minus), "t_minus": _complex(S.t_minus),
                        "t_eigenvalues": rep.eigenvalues, "protected_inputs": _complex(ker)})
    return rows, details


_ROW_KEYS = ["index", "length", "status", "g_plus", "g_minus", "t_eig_max", "t_eig_min", "protected_dim",
             "protected_residual", "unitarity_defect", "flux_defect", "reflection_power"]
_TRS_KEYS = ["skew_r_plus", "skew_r_minus", "transpose_t", "s_sigma3", "kernel_dim"]


def _rows_csv(rows, keys):
    return [[row.get(k, "nan") for k in keys] for row in rows]


def _mean_se(x):
    x = np.asarray(x, float)
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def cmd_scatter(cfg: dict, out: Path, threads: int) -> int:
    s = Setup(cfg)
    n = cfg["ensemble"]
    res = propagate_ensemble(s.plan, s.ou, cfg["epsilon"], [cfg["length"]], range(n), s.integrator, threads)
    trs = s.system.config.trs
    rows, details = _realization_rows(s, res, 0, trs)
    keys = _ROW_KEYS + (_TRS_KEYS if trs else [])
    prov = _provenance(cfg, [cfg["seed"]])
    write_csv(out / "ensemble.csv", keys, _rows_csv(rows, keys), prov)
    write_json(out / "realizations.json", {"realizations": details, "step": res.step}, prov)
    ok = [r for r in rows if r["status"] == "ok"]
    g_mean, g_se = _mean_se([r["g_plus"] for r in ok])
    summary = {"n": n, "ok": len(ok), "failed": n - len(ok), "g_plus_mean": g_mean, "g_plus_se": g_se,
               "g_plus_min": min((r["g_plus"] for r in ok), default=float("nan")),
               "unitarity_max": max((r["unitarity_defect"] for r in ok), default=float("nan")),
               "flux_max": float(res.flux_defects.max()), "index": s.system.index, "index2": s.system.index2}
    write_json(out / "summary.json", summary, prov)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_ensemble(cfg: dict, out: Path, threads: int) -> int:
    s = Setup(cfg)
    n = cfg["ensemble"]
    lengths = sorted(cfg["lengths"])
    res = propagate_ensemble(s.plan, s.ou, cfg["epsilon"], lengths, range(n), s.integrator, threads)
    table = []
    any_ok = False
    for c in range(len(lengths)):
        rows, _ = _realization_rows(s, res, c, False)
        ok = [r for r in rows if r["status"] == "ok"]
        any_ok |= bool(ok)
        g = _mean_se([r["g_plus"] for r in ok])
        refl = _mean_se([r["reflection_power"] for r in ok])
        table.append([float(res.lengths[c]), len(ok), g[0], g[1],
                      min((r["g_plus"] for r in ok), default=float("nan")), refl[0], refl[1],
                      float(res.flux_defects[c].max())])
    write_csv(out / "ensemble_lengths.csv",
              ["length", "n_ok", "g_plus_mean", "g_plus_se", "g_plus_min", "reflection_mean",
               "reflection_se", "flux_defect_max"], table, _provenance(cfg, [cfg["seed"]]))
    return EXIT_OK if any_ok else EXIT_NUMERIC


def cmd_diffusion(cfg: dict, out: Path, threads: int) -> int:
    d = cfg["diffusion"]
    g12, g13, g23 = d["gammas"]
    gammas = Gammas(g12, g13, g23)
    lengths = sorted(d["lengths"])
    seed = cfg["seed"]
    prov = _provenance(cfg, [seed])
    report: dict = {"gammas": d["gammas"], "lengths": lengths}
    ens = sde_ensemble(gammas, lengths, d["sde_samples"], seed, d["dt"], threads=threads)
    m0 = 1.0 - ens.samples.sum(axis=-1)
    rows = []
    fp = evolve_rho(g13, lengths) if g13 == g23 else None
    for c, L in enumerate(lengths):
        mean, se = _mean_se(m0[c])
        d1m, d1se = _mean_se(ens.samples[c, :, 0])
        ks = float(stats.kstest(ens.samples[c, :, 0], "uniform").statistic)
        fp_m0 = float(fp.expectation(lambda x: 1 - x, c)) if fp is not None else float("nan")
        rows.append([L, mean, se, fp_m0, d1m, d1se, ks])
    write_csv(out / "sde_moments.csv",
              ["length", "sde_m0_mean", "sde_m0_se", "fp_m0", "sde_d1_mean", "sde_d1_se", "ks_d1_uniform"],
              rows, prov)
    report["sde_clamped"] = ens.clamped
    if fp is not None:
        write_csv(out / "fp_rho.csv", ["u", "rho", "density"], fp.rows(-1), prov)
    # 2x2 localization: FP and SDE slopes of E[ln tau]
    tau_fp = evolve_transmission_2x2(g13, lengths)
    tau_sde = sde_transmission(g13, lengths, d["sde_samples"], seed, d["dt"], threads=threads)
    report["fp_slope"] = linear_fit(tau_fp.lengths, tau_fp.expectation(np.log))[0]
    report["sde_slope"] = linear_fit(lengths, -tau_sde.samples[..., 0].mean(axis=1))[0]
    if d["epsilons"]:
        s = Setup(cfg)
        comp = microscopic_vs_diffusion(s.plan, s.ou, d["epsilons"], d["micro_lengths"],
                                        d["micro_realizations"], s.integrator, threads)
        report["microscopic"] = comp.to_json()
    write_json(out / "comparison.json", report, prov)
    return EXIT_OK


def cmd_trs_check(cfg: dict, out: Path, threads: int) -> int:
    s = Setup(cfg)
    if not s.system.config.trs:
        raise ConfigError("trs-check needs a time-reversal symmetric block configuration")
    kr = kramers_check(s.system)
    n = cfg["ensemble"]
    res = propagate_ensemble(s.plan, s.ou, cfg["epsilon"], [cfg["length"]], range(n), s.integrator, threads)
    rows, _ = _realization_rows(s, res, 0, True)
    broken = build_plan(s.system, s.strengths, trs=False)
    neg = propagate_ensemble(broken, s.ou, cfg["epsilon"], [cfg["length"]], range(min(n, 10)),
                             s.integrator, threads)
    neg_rows, _ = _realization_rows(s, neg, 0, True)
    ok = [r for r in rows if r["status"] == "ok"]
    payload = {
        "kramers": kr,
        "max_defect": max((max(r[k] for k in _TRS_KEYS[:4]) for r in ok), default=float("nan")),
        "min_kernel_dim": min((r["kernel_dim"] for r in ok), default=-1),
        "negative_control_min_skew": min((r["skew_r_plus"] for r in neg_rows if r["status"] == "ok"),
                                         default=float("nan")),
        "index2": s.system.index2,
        "realizations": [{k: r.get(k) for k in ["index", "status"] + _TRS_KEYS} for r in rows],
    }
    write_json(out / "trs_report.json", payload, _provenance(cfg, [cfg["seed"]]))
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {
    "dispersion": cmd_dispersion,
    "modes": cmd_modes,
    "scatter": cmd_scatter,
    "ensemble": cmd_ensemble,
    "diffusion": cmd_diffusion,
    "trs-check": cmd_trs_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgescat", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"edgescat {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        args.out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](cfg, args.out, args.threads)
    except (ConfigError, ThresholdError, PlanError, ResolutionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, OpaqueSlabError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
