"""Configuration-driven pipeline: seed -> Lax grid -> connection -> frames
-> geometry -> report and mesh export.

Exit codes: 0 all residuals within tolerance, 1 tolerance failure,
2 structural/config error, 3 numerical blow-up or degeneracy.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .algebra import AlgebraElement, BilinearSpace, SymmetricSpaceSpec, in_group_residual
from .errors import (
    ConfigError,
    CurvedFlatsError,
    MissingArtifactError,
    NonImmersiveError,
    NumericalError,
    SeedingError,
    StructuralError,
)
from .frame import abelian_residual, connection_from_state, integrate_frame, mc_residual
from .geometry import (
    curve_diagnostics,
    developing_map,
    gauge_from_h,
    gauge_to_normal_form,
    reconstruct_immersion,
    verify_space_form_geometry,
)
from .lax import GridSolution, GridSpec, commutativity_check, conservation_report, integrate_grid
from .loops import FlowFamily, LaxState, connection_coefficients
from .presets import describe, make_preset, preset_names
from . import algebra

SEED_COEFF_NORM = 0.75
MAX_SEED_ATTEMPTS = 1000

DEFAULT_TOLERANCES = {
    "twist": 1e-9,
    "mc": 1e-4,
    "abelian": 1e-9,
    "conservation": 1e-8,
    "commutativity": 1e-8,
    "group_drift": 1e-8,
    "closedness": 1e-3,
    "isometry": 1e-10,
    "kernel": 1e-8,
    "unit_quadric": 1e-7,
    "gauss_curvature": 0.05,
    "normal_curvature": 0.05,
    "ii_offdiag": 0.05,
}

_KNOWN_KEYS = {
    "preset", "m", "n", "signature", "split", "rank", "d", "powers", "seed",
    "xi0", "extents", "nodes", "substeps", "mu_samples", "outputs",
    "tolerances", "obj_coords", "commutativity_steps",
}

_KNOWN_OUTPUTS = {"report", "csv", "obj"}


def default_config():
    """The default rank-2 configuration: Grassmannian of 3-planes in R^5."""
    return {
        "preset": "sphere-grassmannian",
        "d": 3,
        "powers": [1, 3],
        "seed": 7,
        "extents": [0.4, 0.4],
        "nodes": [33, 33],
        "substeps": 4,
        "mu_samples": [0.6, 1.0, 1.6],
        "outputs": {"report": True, "csv": True, "obj": True},
        "tolerances": {},
        "commutativity_steps": 32,
    }


class RunConfig:
    """Validated run configuration (strict keys, see default_config)."""

    def __init__(self, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = default_config()
        merged.update(raw)
        self.raw = dict(merged)

        self.preset = merged.get("preset")
        if self.preset is not None:
            self.spec = make_preset(self.preset, merged.get("m"), merged.get("n"))
        else:
            for key in ("signature", "split", "rank"):
                if key not in merged or merged[key] is None:
                    raise ConfigError(f"explicit spec requires {key!r}")
            pos, neg = merged["signature"]
            space = BilinearSpace(int(pos), int(neg))
            self.spec = SymmetricSpaceSpec(
                space, tuple(merged["split"]), int(merged["rank"])
            )

        self.d = int(merged["d"])
        self.powers = [int(p) for p in merged["powers"]]
        self.family = FlowFamily(self.powers, self.d)

        extents = merged["extents"]
        nodes = merged["nodes"]
        if len(extents) != len(self.powers) or len(nodes) != len(self.powers):
            raise ConfigError("extents/nodes length must match the number of flows")
        self.grid = GridSpec(extents, nodes)

        self.substeps = int(merged["substeps"])
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")

        self.mu_samples = [float(v) for v in merged["mu_samples"]]
        if not self.mu_samples or any(v == 0.0 for v in self.mu_samples):
            raise ConfigError("mu_samples must be nonempty and nonzero")

        self.seed = merged.get("seed")
        self.xi0 = merged.get("xi0")
        if self.xi0 is None and self.seed is None:
            raise ConfigError("either a seed or explicit xi0 coefficients required")

        outputs = merged.get("outputs") or {}
        bad = set(outputs) - _KNOWN_OUTPUTS
        if bad:
            raise ConfigError(f"unknown output flags: {sorted(bad)}")
        self.outputs = {k: bool(outputs.get(k, True)) for k in _KNOWN_OUTPUTS}

        tol = dict(DEFAULT_TOLERANCES)
        overrides = merged.get("tolerances") or {}
        bad = set(overrides) - set(DEFAULT_TOLERANCES)
        if bad:
            raise ConfigError(f"unknown tolerance keys: {sorted(bad)}")
        tol.update({k: float(v) for k, v in overrides.items()})
        self.tolerances = tol

        self.obj_coords = tuple(merged.get("obj_coords") or (0, 1, 2))
        if len(self.obj_coords) != 3 or any(
            c < 0 or c >= self.spec.dim for c in self.obj_coords
        ):
            raise ConfigError(f"obj_coords out of range: {self.obj_coords}")
        self.commutativity_steps = int(merged.get("commutativity_steps", 32))

    def hash(self):
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def seed_initial_state(config):
    """Draw an admissible seed state (or validate an explicit one).

    Rejection sampling accepts a candidate when the p-parts of its
    connection at the origin span a Cartan subspace; with generic seeds the
    first draw almost always passes.  Returns (state, attempts).
    """
    spec = config.spec
    n, d = spec.dim, config.d
    if config.xi0 is not None:
        stack = np.asarray(config.xi0, dtype=float)
        if stack.shape != (d + 1, n, n):
            raise ConfigError(
                f"xi0 must have shape ({d + 1}, {n}, {n}), got {stack.shape}"
            )
        state = LaxState(stack, spec)  # validates the twist condition
        return state, 0

    rng = np.random.default_rng(int(config.seed))
    for attempt in range(1, MAX_SEED_ATTEMPTS + 1):
        stack = np.empty((d + 1, n, n))
        for k in range(d + 1):
            raw = rng.standard_normal((n, n))
            elem = algebra.skew_project(raw, spec.space)
            part = spec.k_project(elem) if k % 2 == 0 else spec.p_project(elem)
            norm = np.linalg.norm(part)
            if norm < 1e-12:
                break
            stack[k] = part * (SEED_COEFF_NORM / norm)
        else:
            state = LaxState(stack, spec)
            try:
                span = [
                    AlgebraElement(
                        connection_coefficients(stack, r, d)[1], spec.space
                    )
                    for r in config.powers
                ]
                if algebra.is_cartan(span, spec, tol=1e-9):
                    return state, attempt
            except StructuralError:
                pass
    raise SeedingError(
        f"no Cartan seed found in {MAX_SEED_ATTEMPTS} attempts "
        "(signature/rank mismatch likely)"
    )


def build_report(states, frames_by_mu, h_field, config):
    """Compute every residual from the canonical arrays.

    Shared by run and verify so that verification reproduces the original
    residual values exactly.
    """
    spec, family, grid = config.spec, config.family, config.grid
    tol = config.tolerances
    sol = GridSolution(states, grid, family, spec)
    conn = connection_from_state(sol)

    residuals = {}
    checks = {}

    def gate(name, value, tol_key):
        residuals[name] = value
        checks[name] = {
            "value": value,
            "tolerance": tol[tol_key],
            "pass": bool(value <= tol[tol_key]),
        }

    gate("lax_twist", sol.max_twist_residual(), "twist")

    if grid.dims >= 2:
        mc_values = {
            f"{mu:g}": mc_residual(conn, mu, grid)
            for mu in [0.0] + config.mu_samples
        }
        residuals["mc"] = mc_values
        gate("mc_max", max(mc_values.values()), "mc")
    gate("abelian", abelian_residual(conn), "abelian")

    cons = conservation_report(sol, config.mu_samples, max_power=4)
    residuals["conservation"] = {
        f"{mu:g}": {str(p): v for p, v in table.items()}
        for mu, table in cons["table"].items()
    }
    gate("conservation_max", cons["max"], "conservation")

    if grid.dims >= 2:
        comm = commutativity_check(
            sol.state_at((0,) * grid.dims), family, grid.extents,
            config.commutativity_steps,
        )
        gate("commutativity", comm, "commutativity")

    drift = {f"{mu:g}": frames_by_mu[mu].max_drift for mu in config.mu_samples}
    residuals["group_drift"] = drift
    gate("group_drift_max", max(drift.values()), "group_drift")
    h_drift = max(
        in_group_residual(h_field[index], spec.space)
        for index in np.ndindex(*grid.nodes)
    )
    gate("gauge_drift", h_drift, "group_drift")

    geometry = {"status": "ok", "per_mu": {}}
    flags = []
    if not spec.k_block_definite():
        geometry["status"] = "skipped-indefinite"
        flags.append("indefinite-isotropy")
    elif h_drift > tol["group_drift"]:
        geometry["status"] = "invalid-gauge"
        flags.append("invalid-gauge")
    else:
        gauge = gauge_from_h(conn, h_field, spec)
        dev = developing_map(gauge, grid, closedness_tol=tol["closedness"])
        gate("closedness", dev.closedness_residual, "closedness")
        gate("isometry", dev.isometry_residual, "isometry")
        try:
            unit_worst = 0.0
            kernel_worst = 0.0
            for mu in config.mu_samples:
                im = reconstruct_immersion(gauge, frames_by_mu[mu], spec)
                unit_worst = max(unit_worst, im.unit_residual)
                kernel_worst = max(kernel_worst, im.kernel_residual)
                entry = {"degenerate_fraction": im.degenerate_fraction}
                if im.degenerate_fraction > 0:
                    flags.append(f"degenerate-nodes-mu-{mu:g}")
                if grid.dims == 2:
                    entry.update(verify_space_form_geometry(im, grid))
                geometry["per_mu"][f"{mu:g}"] = entry
            gate("unit_quadric", unit_worst, "unit_quadric")
            gate("kernel", kernel_worst, "kernel")
            if grid.dims == 2:
                gate(
                    "gauss_curvature",
                    max(
                        e["gauss_curvature_max_error"]
                        for e in geometry["per_mu"].values()
                    ),
                    "gauss_curvature",
                )
                gate(
                    "normal_curvature",
                    max(
                        e["normal_curvature_residual"]
                        for e in geometry["per_mu"].values()
                    ),
                    "normal_curvature",
                )
                gate(
                    "ii_offdiag",
                    max(e["ii_offdiag_ratio"] for e in geometry["per_mu"].values()),
                    "ii_offdiag",
                )
        except NonImmersiveError:
            geometry["status"] = "non-immersive"
            geometry["per_mu"] = {}
            flags.append("non-immersive")
        if grid.dims == 1 and spec.dim == 3 and spec.space.is_definite:
            diag = curve_diagnostics(
                frames_by_mu[config.mu_samples[0]], conn, grid,
                config.mu_samples[0],
            )
            geometry["curve"] = {
                "speed_mean": float(np.mean(diag["speed"])),
                "speed_std": float(np.std(diag["speed"])),
                "kappa_mean": float(np.mean(diag["geodesic_curvature"])),
                "kappa_std": float(np.std(diag["geodesic_curvature"])),
            }

    report = {
        "schema": 1,
        "config_hash": config.hash(),
        "preset": config.preset,
        "signature": [spec.space.pos, spec.space.neg],
        "split": list(spec.split),
        "rank": spec.rank,
        "d": config.d,
        "powers": config.powers,
        "grid": {"extents": list(grid.extents), "nodes": list(grid.nodes)},
        "mu_samples": config.mu_samples,
        "residuals": residuals,
        "checks": checks,
        "geometry": geometry,
        "flags": sorted(set(flags)),
        "pass": all(c["pass"] for c in checks.values()),
    }
    return report


def _fmt(value):
    return f"{value:.17g}"


def write_phi_csv(path, config, phis_by_mu):
    grid, n = config.grid, config.spec.dim
    header = (
        [f"x{i + 1}" for i in range(grid.dims)]
        + ["mu"]
        + [f"phi_{i + 1}" for i in range(n)]
    )
    lines = [",".join(header)]
    for mu in config.mu_samples:
        phi = phis_by_mu[mu]
        for index in np.ndindex(*grid.nodes):
            coords = grid.coords(index)
            row = [_fmt(c) for c in coords] + [_fmt(mu)] + [
                _fmt(v) for v in phi[index]
            ]
            lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_obj(path, config, phi, mu):
    grid = config.grid
    if grid.dims != 2:
        return
    n0, n1 = grid.nodes
    cx, cy, cz = config.obj_coords
    lines = [
        "# curved-flat reconstruction mesh",
        f"# config sha256: {config.hash()}",
        f"# mu: {_fmt(mu)}",
    ]
    for index in np.ndindex(*grid.nodes):
        p = phi[index]
        lines.append(f"v {_fmt(p[cx])} {_fmt(p[cy])} {_fmt(p[cz])}")

    def vid(i, j):
        return i * n1 + j + 1

    for i in range(n0 - 1):
        for j in range(n1 - 1):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            lines.append(f"f {a} {b} {c}")
            lines.append(f"f {a} {c} {d}")
    path.write_text("\n".join(lines) + "\n")


def run_pipeline(config, out_dir):
    """Run the full pipeline and write artifacts.  Returns (report, exit_code)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec, family, grid = config.spec, config.family, config.grid

    xi0, attempts = seed_initial_state(config)
    sol = integrate_grid(xi0, family, grid, substeps=config.substeps)
    conn = connection_from_state(sol)
    frames_by_mu = {
        mu: integrate_frame(conn, mu, grid) for mu in config.mu_samples
    }
    if spec.k_block_definite():
        gauge = gauge_to_normal_form(conn, spec)
        h_field = gauge.h
    else:
        h_field = np.broadcast_to(
            np.eye(spec.dim), grid.nodes + (spec.dim, spec.dim)
        ).copy()

    report = build_report(sol.states, frames_by_mu, h_field, config)
    report["seed_attempts"] = attempts

    arrays = {
        "states": sol.states,
        "frames": np.stack([frames_by_mu[mu].frames for mu in config.mu_samples]),
        "gauge_h": h_field,
        "mu_samples": np.asarray(config.mu_samples),
    }
    np.savez_compressed(out_dir / "arrays.npz", **arrays)
    (out_dir / "config.json").write_text(json.dumps(config.raw, indent=2) + "\n")
    if config.outputs["report"]:
        (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    if config.outputs["csv"] or config.outputs["obj"]:
        h_inv = np.swapaxes(h_field, -1, -2)
        phis = {
            mu: (frames_by_mu[mu].frames @ h_inv)[..., :, 0]
            for mu in config.mu_samples
        }
        if config.outputs["csv"]:
            write_phi_csv(out_dir / "phi.csv", config, phis)
        if config.outputs["obj"] and grid.dims == 2:
            for i, mu in enumerate(config.mu_samples):
                write_obj(out_dir / f"mesh_{i:02d}.obj", config, phis[mu], mu)
    return report, 0 if report["pass"] else 1


def verify_command(out_dir):
    """Recompute all residuals from stored artifacts; idempotent."""
    out_dir = Path(out_dir)
    for name in ("config.json", "report.json", "arrays.npz"):
        if not (out_dir / name).exists():
            raise MissingArtifactError(f"missing artifact: {out_dir / name}")
    try:
        config = RunConfig(json.loads((out_dir / "config.json").read_text()))
        stored = json.loads((out_dir / "report.json").read_text())
        arrays = np.load(out_dir / "arrays.npz")
        states = arrays["states"]
        frames = arrays["frames"]
        h_field = arrays["gauge_h"]
        mus = [float(v) for v in arrays["mu_samples"]]
    except (ValueError, KeyError, OSError) as err:
        raise MissingArtifactError(f"corrupt artifacts: {err}") from err
    if mus != config.mu_samples:
        raise MissingArtifactError("stored mu samples disagree with config")

    class _Loaded:
        def __init__(self, mu, f):
            self.mu = mu
            self.frames = f
            self.max_drift = max(
                in_group_residual(f[index], config.spec.space)
                for index in np.ndindex(*config.grid.nodes)
            )

    frames_by_mu = {
        mu: _Loaded(mu, frames[i]) for i, mu in enumerate(config.mu_samples)
    }
    report = build_report(states, frames_by_mu, h_field, config)
    report["verified_against"] = stored.get("config_hash")
    ok = report["pass"] and stored.get("config_hash") == report["config_hash"]
    return report, 0 if ok else 1


def _cmd_run(args):
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON in {path}: {err}") from err
    config = RunConfig(raw)
    out = Path(args.out)
    try:
        report, code = run_pipeline(config, out)
    except CurvedFlatsError as err:
        out.mkdir(parents=True, exist_ok=True)
        failure = {
            "schema": 1,
            "config_hash": config.hash(),
            "pass": False,
            "error": {"category": type(err).__name__, "message": str(err)},
        }
        (out / "report.json").write_text(json.dumps(failure, indent=2) + "\n")
        raise
    print(json.dumps({k: report[k] for k in ("config_hash", "pass", "flags")}))
    return code


def _cmd_verify(args):
    report, code = verify_command(args.run_dir)
    failing = sorted(k for k, c in report["checks"].items() if not c["pass"])
    print(json.dumps({"pass": report["pass"], "failing": failing}))
    return code


def _cmd_presets(_args):
    for name in preset_names():
        spec = make_preset(name)
        print(
            f"{name:22s} signature=({spec.space.pos},{spec.space.neg}) "
            f"split={spec.split} rank={spec.rank}  {describe(name)}"
        )
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="curvedflats",
        description="Construct and verify curved flats from commuting Lax flows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the pipeline from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--out", default="run_out", help="output directory")
    p_run.set_defaults(func=_cmd_run)
    p_ver = sub.add_parser("verify", help="recheck a finished run directory")
    p_ver.add_argument("run_dir")
    p_ver.set_defaults(func=_cmd_verify)
    p_pre = sub.add_parser("presets", help="list named symmetric-space presets")
    p_pre.set_defaults(func=_cmd_presets)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, StructuralError, MissingArtifactError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except CurvedFlatsError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
