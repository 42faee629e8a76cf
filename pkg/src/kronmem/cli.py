"""Command line interface: simulate, estimate-noise, invert, evaluate, report.

Directory layouts
-----------------
simulate ``--out SIM``::

    SIM/manifest.txt             global settings
    SIM/vertices.kmm faces.kmm   mesh
    SIM/leadfield.kmm            J0 x K
    SIM/profile.kmm              T0 x 1
    SIM/trials/tNNNN_rRR/        Z.kmm, patch.kmm, manifest.txt
    SIM/noise/noise_NNNN.kmm     signal-free recordings (T0 x J0)

estimate-noise ``--out MODEL``: the reduction (selected wavelet
coefficients, PCA basis) and the Kronecker noise factors.

invert ``--out EST``: per trial ``W_<stage>.kmm`` and ``alpha_<stage>.kmm``
for every stage up to the requested one, plus the parcel labels.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import cortex, simstudy
from .core import KroneckerCovariance
from .io import (
    read_csv_matrix,
    read_kmm,
    read_manifest,
    read_off,
    write_kmm,
    write_manifest,
)
from .mem import STAGES, MemConfig, build_model, invert_stages
from .optimizer import OptimizerConfig
from .pipeline import Reduction, estimate_noise, fit_reduction
from .reduction import SpatialFilter
from .wavelet import (
    CoefficientSelection,
    WaveletConfig,
    boundary_mask,
    dwt_inverse,
    embed_coefficients,
)


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


# --- loaders ----------------------------------------------------------------------

def _load_mesh(spec):
    if spec.startswith("builtin:icosphere:"):
        try:
            n = int(spec.rsplit(":", 1)[1])
        except ValueError:
            raise CliError(f"bad icosphere level in {spec!r}") from None
        if not 0 <= n <= 6:
            raise CliError("icosphere level must lie in [0, 6]")
        return cortex.icosphere(n)
    path = Path(spec)
    if not path.is_file():
        raise CliError(f"mesh file not found: {spec}")
    return read_off(path)


def _load_profile(spec, sfreq=50.0):
    if spec == "builtin:slowwave":
        return simstudy.slow_wave_profile()
    path = Path(spec)
    if not path.is_file():
        raise CliError(f"profile file not found: {spec}")
    return simstudy.TimeProfile(read_csv_matrix(path).ravel(), sfreq)


def _trial_dirs(sim):
    root = Path(sim) / "trials"
    if not root.is_dir():
        raise CliError(f"{sim}: no trials/ directory (not a simulate output?)")
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        raise CliError(f"{root}: no trials")
    return dirs


def _load_reduction(model_dir):
    m = read_manifest(Path(model_dir) / "manifest.txt")
    wcfg = WaveletConfig(int(m["taps"]), int(m["levels"]), int(m["padded_length"]))
    sel = CoefficientSelection(
        read_kmm(Path(model_dir) / "selection.kmm").ravel().astype(int), wcfg.padded_length)
    spatial = SpatialFilter(read_kmm(Path(model_dir) / "spatial_filter.kmm"),
                            read_kmm(Path(model_dir) / "inertia.kmm").ravel())
    return Reduction(wcfg, sel, spatial, int(m["n_times"]))


def _load_noise(model_dir):
    d = Path(model_dir)
    return KroneckerCovariance(read_kmm(d / "noise_temporal.kmm"),
                               read_kmm(d / "noise_spatial.kmm"), normalization="none")


# --- subcommands ------------------------------------------------------------------

def cmd_simulate(a):
    if a.trials < 1 or a.realizations < 1:
        raise CliError("--trials and --realizations must be positive")
    if not 0 <= a.patch_min <= a.patch_max:
        raise CliError("need 0 <= --patch-min <= --patch-max")
    verts, faces = _load_mesh(a.mesh)
    g = cortex.build_graph(verts, faces)
    if a.patch_max > g.n_vertices:
        raise CliError(f"--patch-max exceeds the {g.n_vertices} mesh vertices")
    profile = _load_profile(a.profile)
    setup_seq, trial_seq, noise_seq = np.random.SeedSequence(a.seed).spawn(3)
    setup_rng = np.random.default_rng(setup_seq)
    if a.leadfield == "synthetic":
        G0, sensors = simstudy.synthetic_leadfield(verts, a.sensors, setup_rng,
                                                   width=a.leadfield_width)
    else:
        G0 = read_kmm(a.leadfield)
        if G0.shape[1] != g.n_vertices:
            raise CliError(f"lead-field has {G0.shape[1]} columns, mesh has {g.n_vertices} vertices")
        sensors = simstudy.sphere_points(G0.shape[0], setup_rng, 1.3)
    noise = simstudy.default_noise(len(profile), sensors, a.noise_phi, a.noise_length)

    out = Path(a.out)
    (out / "trials").mkdir(parents=True, exist_ok=True)
    (out / "noise").mkdir(exist_ok=True)
    write_kmm(out / "vertices.kmm", verts)
    write_kmm(out / "faces.kmm", faces)
    write_kmm(out / "leadfield.kmm", G0)
    write_kmm(out / "profile.kmm", profile.samples)

    seeds = trial_seq.generate_state(a.trials * a.realizations, dtype=np.uint64)
    patch_rng = np.random.default_rng(trial_seq.spawn(1)[0])
    for t in range(a.trials):
        size = int(patch_rng.integers(a.patch_min, a.patch_max + 1))
        patch = cortex.grow_patch(g, int(patch_rng.integers(g.n_vertices)), size, patch_rng)
        for r in range(a.realizations):
            seed = int(seeds[t * a.realizations + r])
            tr = simstudy.simulate_trial(g, G0, profile, size, a.snr_db, noise, seed, patch=patch)
            d = out / "trials" / f"t{t:04d}_r{r:02d}"
            d.mkdir(exist_ok=True)
            write_kmm(d / "Z.kmm", tr.Z)
            write_kmm(d / "patch.kmm", tr.patch.astype(float))
            write_manifest(d / "manifest.txt", {
                "trial": t, "realization": r, "seed": seed, "patch_size": int(tr.patch.size),
                "snr_db": float(a.snr_db), "noise_scale": tr.noise_scale,
            })
    noise_rng = np.random.default_rng(noise_seq)
    for i in range(a.noise_recordings):
        write_kmm(out / "noise" / f"noise_{i:04d}.kmm", noise.draw(noise_rng))
    write_manifest(out / "manifest.txt", {
        "format": "kronmem-sim", "seed": a.seed, "mesh": a.mesh, "leadfield": a.leadfield,
        "profile": a.profile, "sfreq": profile.sfreq, "trials": a.trials,
        "realizations": a.realizations, "patch_min": a.patch_min, "patch_max": a.patch_max,
        "snr_db": float(a.snr_db), "n_vertices": g.n_vertices, "n_sensors": G0.shape[0],
        "n_times": len(profile), "noise_recordings": a.noise_recordings,
    })


def cmd_estimate_noise(a):
    noise_dir = Path(a.noise_trials)
    files = sorted(noise_dir.glob("*.kmm"))
    if len(files) < 2:
        raise CliError(f"{noise_dir}: need at least two noise recordings (*.kmm)")
    data = Path(a.data) if a.data else noise_dir.parent
    trials = np.stack([read_kmm(d / "Z.kmm") for d in _trial_dirs(data)])
    recordings = [read_kmm(f) for f in files]
    if any(r.shape != trials.shape[1:] for r in recordings):
        raise CliError("noise recordings and data trials differ in shape")
    red = fit_reduction(trials, a.coeffs, a.components, a.wavelet_taps)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        noise, info = estimate_noise(recordings, red, return_info=True)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_kmm(out / "selection.kmm", red.selection.index_array.astype(float))
    write_kmm(out / "spatial_filter.kmm", red.spatial.basis)
    write_kmm(out / "inertia.kmm", red.spatial.inertia)
    write_kmm(out / "noise_temporal.kmm", noise.temporal)
    write_kmm(out / "noise_spatial.kmm", noise.spatial)
    write_manifest(out / "manifest.txt", {
        "format": "kronmem-model", "taps": red.wavelet.taps, "levels": red.wavelet.levels,
        "padded_length": red.wavelet.padded_length, "n_times": red.n_times,
        "L": red.L, "J": red.J, "selected": list(red.selection.indices),
        "unmasked": int((~boundary_mask(red.n_times, red.wavelet)).sum()),
        "files": "selection.kmm,spatial_filter.kmm,inertia.kmm,noise_temporal.kmm,noise_spatial.kmm",
        "noise_recordings": len(recordings),
        "total_inertia": red.spatial.total_inertia, "flipflop_iterations": info.iterations,
        "flipflop_converged": info.converged, "warnings": len(caught),
    })


def cmd_invert(a):
    data, model_dir = Path(a.data), Path(a.model)
    sim = read_manifest(data / "manifest.txt")
    red = _load_reduction(model_dir)
    noise = _load_noise(model_dir)
    g = cortex.build_graph(read_kmm(data / "vertices.kmm"),
                           read_kmm(data / "faces.kmm").astype(int))
    G = red.leadfield(read_kmm(data / "leadfield.kmm"))
    if not 1 <= a.parcels <= g.n_vertices:
        raise CliError(f"--parcels must lie in [1, {g.n_vertices}]")
    parcels = cortex.parcellate(g, a.parcels, np.random.default_rng(a.seed))
    covs = [cortex.parcel_covariance(g, p, a.rho) for p in parcels]
    labels = np.empty(g.n_vertices)
    for i, p in enumerate(parcels):
        labels[p] = i
    cfg = MemConfig(alpha=a.alpha, rho=a.rho, gamma=a.gamma, snr_factor=a.snr_factor)
    opt = OptimizerConfig(grad_tol=a.grad_tol)
    stages = STAGES[: STAGES.index(a.stage) + 1]

    out = Path(a.out)
    (out / "trials").mkdir(parents=True, exist_ok=True)
    write_kmm(out / "parcels.kmm", labels)
    n_unconverged = 0
    for d in _trial_dirs(data):
        tm = read_manifest(d / "manifest.txt")
        D = red.reduce(read_kmm(d / "Z.kmm"))
        scale = float(tm["noise_scale"])
        noise_t = noise.scaled(scale ** 2) if scale > 0 else noise
        model = build_model(G, noise_t, parcels, covs, D, cfg)
        ests = invert_stages(D, model, a.stage, opt, a.gamma)
        od = out / "trials" / d.name
        od.mkdir(exist_ok=True)
        info = {"trial": tm["trial"], "realization": tm["realization"]}
        for s in stages:
            write_kmm(od / f"W_{s}.kmm", ests[s].W_hat)
            write_kmm(od / f"alpha_{s}.kmm", ests[s].alpha_post)
            diag = ests[s].diagnostics
            info[f"free_energy_{s}"] = float(diag["free_energy"])
            info[f"converged_{s}"] = bool(diag["converged"])
            n_unconverged += not diag["converged"]
        write_manifest(od / "manifest.txt", info)
    write_manifest(out / "manifest.txt", {
        "format": "kronmem-estimate", "stage": a.stage, "stages": ",".join(stages),
        "alpha": a.alpha, "rho": a.rho, "gamma": a.gamma, "parcels": a.parcels,
        "grad_tol": a.grad_tol, "seed": a.seed, "model": str(model_dir.resolve()),
        "files": "parcels.kmm,trials/*/W_<stage>.kmm,trials/*/alpha_<stage>.kmm",
        "sim_seed": sim.get("seed", ""), "unconverged": n_unconverged,
    })


def cmd_evaluate(a):
    truth, est = Path(a.truth), Path(a.estimate)
    em = read_manifest(est / "manifest.txt")
    red = _load_reduction(em["model"])
    profile = simstudy.TimeProfile(read_kmm(truth / "profile.kmm").ravel())
    K = read_kmm(truth / "leadfield.kmm").shape[1]
    stages = em["stages"].split(",")
    rng = np.random.default_rng(a.seed)
    rows = []
    for d in _trial_dirs(truth):
        ed = est / "trials" / d.name
        if not ed.is_dir():
            raise CliError(f"no estimate for trial {d.name}")
        tm = read_manifest(d / "manifest.txt")
        patch = read_kmm(d / "patch.kmm").ravel().astype(int)
        if patch.size == 0:
            raise CliError(f"trial {d.name} has no active source; metrics are undefined")
        j0 = np.zeros((len(profile), K))
        j0[:, patch] = profile.samples[:, None]
        for s in stages:
            W = read_kmm(ed / f"W_{s}.kmm")
            tc = dwt_inverse(embed_coefficients(W, red.selection), red.wavelet)[: red.n_times]
            rows.append(simstudy.evaluate_estimate(
                j0, tc, patch, profile, s, rng, a.resamples,
                int(tm["trial"]), int(tm["realization"])))
    simstudy.write_metrics_csv(a.out, rows)


def cmd_report(a):
    rows = []
    offset = 0
    for path in a.metrics:
        if not Path(path).is_file():
            raise CliError(f"metrics file not found: {path}")
        part = simstudy.read_metrics_csv(path)
        if not part:
            raise CliError(f"{path}: no metric rows")
        # trials from different files are distinct source configurations
        rows += [simstudy.MetricsRow(r.stage, r.iota, r.auc, r.auc_restricted,
                                     r.trial + offset, r.realization) for r in part]
        offset = max(r.trial for r in rows) + 1
    Path(a.out).write_text(simstudy.report_csv(simstudy.aggregate_report(rows)))


def build_parser():
    p = _Parser(prog="kronmem", description="Kronecker-structured MEM source imaging.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="synthetic trials and noise recordings")
    s.add_argument("--mesh", default="builtin:icosphere:3")
    s.add_argument("--leadfield", default="synthetic")
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--patch-min", type=int, default=20)
    s.add_argument("--patch-max", type=int, default=80)
    s.add_argument("--snr-db", type=float, default=6.0206)
    s.add_argument("--profile", default="builtin:slowwave")
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--realizations", type=int, default=1)
    s.add_argument("--noise-recordings", type=int, default=60)
    s.add_argument("--sensors", type=int, default=40)
    s.add_argument("--leadfield-width", type=float, default=0.8,
                   help="Gaussian width of the synthetic lead-field kernel")
    s.add_argument("--noise-phi", type=float, default=0.7)
    s.add_argument("--noise-length", type=float, default=0.5)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate-noise", help="reduction and flip-flop noise covariance")
    e.add_argument("--noise-trials", required=True)
    e.add_argument("--wavelet-taps", type=int, default=6)
    e.add_argument("--coeffs", type=int, default=62)
    e.add_argument("--components", type=int, default=15)
    e.add_argument("--out", required=True)
    e.add_argument("--data", help="simulate directory used to fit the reduction "
                                  "(default: parent of --noise-trials)")
    e.set_defaults(func=cmd_estimate_noise)

    i = sub.add_parser("invert", help="staged MEM inversion of every trial")
    i.add_argument("--data", required=True)
    i.add_argument("--model", required=True)
    i.add_argument("--stage", choices=STAGES, default="uGM")
    i.add_argument("--alpha", type=float, default=0.25)
    i.add_argument("--rho", type=float, default=0.3)
    i.add_argument("--parcels", type=int, default=156)
    i.add_argument("--grad-tol", type=float, default=1e-8)
    i.add_argument("--out", required=True)
    i.add_argument("--gamma", type=float, default=0.05)
    i.add_argument("--snr-factor", type=float, default=1.0)
    i.add_argument("--seed", type=_u64, default=0, help="parcellation seed")
    i.set_defaults(func=cmd_invert)

    v = sub.add_parser("evaluate", help="iota and AUC metrics per trial and stage")
    v.add_argument("--truth", required=True)
    v.add_argument("--estimate", required=True)
    v.add_argument("--resamples", type=int, default=20)
    v.add_argument("--out", default="metrics.csv")
    v.add_argument("--seed", type=_u64, default=0, help="restricted-AUC subsampling seed")
    v.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="aggregate metrics into a summary table")
    r.add_argument("--metrics", nargs="+", required=True)
    r.add_argument("--out", default="table.csv")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError, OSError, KeyError, np.linalg.LinAlgError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"kronmem {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
