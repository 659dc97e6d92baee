"""Command-line pipeline: simulate, evaluate theory, analyze, fit, compare.

Every command validates its inputs before computing, writes its outputs
atomically into --out-dir, and drops a manifest.json capturing the fully
resolved configuration, input digests, seed and package version, so a run
can be reproduced bit for bit (``--from-manifest``).

Exit codes: 0 success, 2 validation failure, 3 numeric failure, 4 I/O
failure.
"""

from __future__ import annotations

import argparse

import sys
from pathlib import Path

import numpy as np

from . import __version__, graphs, io, rmt, stats, theory

EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

def _manifest(command: str, args_dict: dict, seed, out_dir: Path) -> io.RunManifest:
    return io.RunManifest(command=command, config=args_dict, seed=seed, version=__version__)

def _finish(manifest: io.RunManifest, out_dir: Path, watch: io.Stopwatch) -> None:
    manifest.wall_time_s = round(watch.elapsed, 3)
    manifest.write(out_dir / "manifest.json")

def _args_dict(args: argparse.Namespace) -> dict:
    skip = {"func", "from_manifest", "command"}

    def clean(v):
        if isinstance(v, Path):
            return str(v)
        if isinstance(v, list):
            return [clean(x) for x in v]
        return v

    return {k: clean(v) for k, v in vars(args).items() if k not in skip}

# ----------------------------------------------------------------- simulate

def _resolve_network(args) -> graphs.NetworkSpec:
    if args.network:
        spec = graphs.load_network(args.network)
    else:
        builders = {"nine-joint": graphs.nine_joint_network, "hexagon": graphs.hexagon_network}
        if args.preset not in builders:
            raise ValueError(
                f"unknown preset {args.preset!r}; available: {sorted(builders)}"
            )
        kwargs = {"with_circulators": not args.no_circulators}
        if args.loss is not None:
            kwargs["per_length_loss"] = args.loss
        spec = builders[args.preset](**kwargs)
    return spec

def cmd_simulate_graph(args) -> int:
    out_dir = Path(args.out_dir)
    if args.realizations < 1:
        raise ValueError(f"realizations must be >= 1, got {args.realizations}")
    spec = _resolve_network(args)
    epsilon = spec.coax.epsilon if spec.coax else 2.06
    if args.k_min is not None and args.k_max is not None:
        window = (args.k_min, args.k_max)
    else:
        window = (float(graphs.wavenumber(args.freq_min_ghz * 1e9, epsilon)),
                  float(graphs.wavenumber(args.freq_max_ghz * 1e9, epsilon)))
    with io.Stopwatch() as watch:
        samples, diagnostics = graphs.simulate_ensemble(
            spec, args.realizations, window, args.samples_per_realization,
            seed=args.seed, delta_max=args.delta_max,
        )
        io.write_samples_csv(out_dir / "samples.csv", samples)
        if args.dump_network:
            graphs.dump_network(spec, out_dir / "network.json")
    manifest = _manifest("simulate-graph", _args_dict(args), args.seed, out_dir)
    manifest.config["resolved_window"] = list(window)
    manifest.config["network_name"] = spec.name
    manifest.outputs = ["samples.csv"] + (["network.json"] if args.dump_network else [])
    if diagnostics:
        manifest.warnings.append(f"{len(diagnostics)} wavenumber(s) needed jitter retries")
    if args.network:
        manifest.inputs[str(args.network)] = io.sha256_file(args.network)
    _finish(manifest, out_dir, watch)
    print(f"simulate-graph: {len(samples)} samples from {args.realizations} realizations "
          f"of {spec.name} -> {out_dir / 'samples.csv'}")
    return 0

def cmd_simulate_rmt(args) -> int:
    out_dir = Path(args.out_dir)
    if args.preset:
        if args.preset not in rmt.PRESETS:
            raise ValueError(
                f"unknown preset {args.preset!r}; available: {sorted(rmt.PRESETS)}"
            )
        config = rmt.preset_config(
            args.preset, beta=args.beta, n_dim=args.n_dim,
            n_samples=args.n_samples, seed=args.seed,
            absorption_mode=args.absorption_mode,
        )
    else:
        if args.absorption_mode == "shift":
            channels = rmt.ChannelModel(t_a=args.t_a, t_b=args.t_b)
            config = rmt.EnsembleConfig(
                beta=args.beta, n_dim=args.n_dim, n_samples=args.n_samples,
                seed=args.seed, channels=channels, energy_window=args.energy_window,
                absorption_mode="shift", gamma_shift=args.gamma,
            )
        else:
            channels = rmt.ChannelModel(t_a=args.t_a, t_b=args.t_b,
                                        m_channels=args.m_channels, t_c=args.t_c)
            config = rmt.EnsembleConfig(
                beta=args.beta, n_dim=args.n_dim, n_samples=args.n_samples,
                seed=args.seed, channels=channels, energy_window=args.energy_window,
                calibrate=not args.no_calibration,
            )
    with io.Stopwatch() as watch:
        samples = rmt.sample_ensemble(config)
        io.write_samples_csv(out_dir / "samples.csv", samples)
    manifest = _manifest("simulate-rmt", _args_dict(args), args.seed, out_dir)
    manifest.config["gamma_decomposition"] = {
        "t_a": config.channels.t_a, "t_b": config.channels.t_b,
        "m_channels": config.channels.m_channels, "t_c": config.channels.t_c,
        "gamma": config.gamma_shift if config.absorption_mode == "shift"
        else config.channels.gamma,
    }
    manifest.outputs = ["samples.csv"]
    _finish(manifest, out_dir, watch)
    print(f"simulate-rmt: {len(samples)} samples (beta={config.beta}, "
          f"mode={config.absorption_mode}) -> {out_dir / 'samples.csv'}")
    return 0

# ------------------------------------------------------------------- theory

def cmd_theory(args) -> int:
    out_dir = Path(args.out_dir)
    if not args.gamma:
        raise ValueError("at least one --gamma is required")
    all_params = [theory.params_from_gamma(g) for g in args.gamma]  # validate first
    with io.Stopwatch() as watch:
        outputs, residuals = [], {}
        for g, params in zip(args.gamma, all_params):
            grid = theory.density_grid(params, n_nodes=args.nodes,
                                       n_joint=args.joint_nodes)
            tag = f"gamma{g:g}"
            sigma = theory.matched_sigma(params)
            io.write_curve_csv(out_dir / f"marginal_{tag}.csv", {
                "u": grid.nodes, "density": grid.marginal,
                "gaussian": theory.gaussian_baseline(grid.nodes, sigma),
            })
            u1, u2 = np.meshgrid(grid.joint_nodes, grid.joint_nodes, indexing="ij")
            io.write_curve_csv(out_dir / f"joint_{tag}.csv", {
                "u1": u1.ravel(), "u2": u2.ravel(), "density": grid.joint.ravel(),
            })
            outputs += [f"marginal_{tag}.csv", f"joint_{tag}.csv"]
            residuals[tag] = {
                "alpha": params.alpha, "x": params.x,
                "norm_residual": grid.norm_residual,
                "matched_sigma": sigma, "quad_rtol": grid.quad_rtol,
            }
    manifest = _manifest("theory", _args_dict(args), None, out_dir)
    manifest.outputs = outputs
    manifest.extras["curves"] = residuals
    _finish(manifest, out_dir, watch)
    print(f"theory: wrote {len(outputs)} curve files for gamma in {args.gamma}")
    return 0

# ------------------------------------------------------------------ analyze

def _load_inputs(args) -> tuple[io.TwoPortSamples, dict]:
    digests = {}
    parts = []
    for path in args.samples or []:
        parts.append(io.read_samples_csv(path))
        digests[str(path)] = io.sha256_file(path)
    for path in args.touchstone or []:
        parts.append(io.read_touchstone(path))
        digests[str(path)] = io.sha256_file(path)
    if not parts:
        raise ValueError("no input files given (use --samples and/or --touchstone)")
    samples = parts[0]
    for p in parts[1:]:
        samples = samples.extend(p)
    return samples, digests

def cmd_analyze(args) -> int:
    out_dir = Path(args.out_dir)
    samples, digests = _load_inputs(args)
    with io.Stopwatch() as watch:
        if args.subtract_mean_s:
            samples = stats.subtract_mean_s(samples)
        ks = stats.k_samples(samples)
        io.write_samples_csv(out_dir / "k_samples.csv", ks, prefix="k")
        t_a = stats.transmission_coefficient(samples, "a")
        t_b = stats.transmission_coefficient(samples, "b")
        w, w_err = stats.enhancement_factor(samples, seed=args.seed)
        direct = stats.direct_process_check(samples)
        curves = {}
        for name, values in [
            ("re_s_ab", samples.s_ab.real), ("im_s_ab", samples.s_ab.imag),
            ("re_k_ab", ks.s_ab.real), ("im_k_ab", ks.s_ab.imag),
        ]:
            est = stats.estimate_distribution(values, kind=args.estimator)
            io.write_curve_csv(out_dir / f"dist_{name}.csv",
                               {"u": est.centers, "density": est.density})
            curves[name] = f"dist_{name}.csv"
        report = [
            f"samples: {len(samples)} ({samples.source})",
            f"T_a = {t_a:.4f}",
            f"T_b = {t_b:.4f}",
            f"W = {w:.4f} +- {w_err:.4f}",
            f"direct processes: {direct.summary()}",
        ]
        io.atomic_write_text(out_dir / "report.txt", "\n".join(report) + "\n")
    manifest = _manifest("analyze", _args_dict(args), args.seed, out_dir)
    manifest.inputs = digests
    manifest.outputs = ["k_samples.csv", "report.txt"] + sorted(curves.values())
    manifest.extras["results"] = {"t_a": t_a, "t_b": t_b, "w": w, "w_stderr": w_err,
                                  "mean_s_ab": direct.mean_ab}
    if direct.flagged:
        manifest.warnings.append(
            f"direct-process flag: |<S_ab>| = {direct.mean_ab:.3f} > {direct.threshold}"
        )
    _finish(manifest, out_dir, watch)
    print("\n".join(report))
    return 0

# ---------------------------------------------------------------------- fit

def _load_k_values(path) -> tuple[np.ndarray, np.ndarray]:
    ks = io.read_samples_csv(path)
    pooled = np.concatenate([ks.s_ab.real, ks.s_ab.imag])
    realization = np.concatenate([ks.realization, ks.realization])
    return pooled, realization

def cmd_fit(args) -> int:
    out_dir = Path(args.out_dir)
    values, realization = _load_k_values(args.k_samples)
    with io.Stopwatch() as watch:
        result = stats.fit_gamma(
            values=values, realization=realization, objective=args.objective,
            t_a=args.t_a, t_b=args.t_b, m_channels=args.m_channels, seed=args.seed,
        )
        lines = [
            f"gamma_hat = {result.gamma_hat:.4f} +- {result.stderr:.4f}",
            f"objective ({result.objective_kind}) = {result.objective:.6g}",
            f"n_samples (pooled Re/Im) = {result.n_samples}",
        ]
        if result.t_c is not None:
            lines.append(
                f"decomposition: T_a={result.t_a} T_b={result.t_b} "
                f"M={result.m_channels} T_c={result.t_c:.6g}"
            )
        io.atomic_write_text(out_dir / "fit.txt", "\n".join(lines) + "\n")
    manifest = _manifest("fit", _args_dict(args), args.seed, out_dir)
    manifest.inputs[str(args.k_samples)] = io.sha256_file(args.k_samples)
    manifest.outputs = ["fit.txt"]
    manifest.extras["fit"] = {
        "gamma_hat": result.gamma_hat, "stderr": result.stderr,
        "objective": result.objective, "t_c": result.t_c,
    }
    _finish(manifest, out_dir, watch)
    print("\n".join(lines))
    return 0

# ------------------------------------------------------------------ compare

def cmd_compare(args) -> int:
    out_dir = Path(args.out_dir)
    ks = io.read_samples_csv(args.k_samples)
    part = {"re": ks.s_ab.real, "im": ks.s_ab.imag,
            "pooled": np.concatenate([ks.s_ab.real, ks.s_ab.imag])}[args.part]
    warnings = []
    with io.Stopwatch() as watch:
        est = stats.estimate_distribution(part)
        centers = est.centers
        if args.theory_curve:
            curve = io.read_curve_csv(args.theory_curve)
            grid_u, grid_p = curve["u"], curve["density"]
            if (grid_u[0] > centers[0]) or (grid_u[-1] < centers[-1]) or len(grid_u) != len(centers):
                warnings.append("theory curve re-gridded onto the empirical bin centers")
            theory_density_vals = np.interp(centers, grid_u, grid_p, left=0.0, right=0.0)
            cdf_grid = np.concatenate([[0.0], np.cumsum(
                0.5 * (grid_p[1:] + grid_p[:-1]) * np.diff(grid_u))])
            cdf_grid /= cdf_grid[-1]
            def theory_cdf(u):
                return np.interp(u, grid_u, cdf_grid)
            gamma_label = str(args.theory_curve)
        else:
            if args.gamma is None:
                raise ValueError("need --gamma or --theory-curve")
            params = theory.params_from_gamma(args.gamma)
            theory_density_vals = theory.marginal_curve(centers, params)
            theory_cdf = theory.marginal_cdf(params)
            gamma_label = f"gamma={args.gamma}"
        d_theory = stats.ks_statistic(part, theory_cdf)
        columns = {"u": centers, "empirical": est.density, "theory": theory_density_vals}
        report = [f"KS(empirical, theory[{gamma_label}]) = {d_theory:.5f}"]
        d_gauss = None
        if args.gaussian:
            sigma = (theory.matched_sigma(theory.params_from_gamma(args.gamma))
                     if args.gamma is not None else float(np.std(part)))
            columns["gaussian"] = theory.gaussian_baseline(centers, sigma)
            from scipy.stats import norm
            d_gauss = stats.ks_statistic(part, lambda u: norm.cdf(u, scale=sigma))
            report.append(f"KS(empirical, gaussian sigma={sigma:.4f}) = {d_gauss:.5f}")
        io.write_curve_csv(out_dir / "overlay.csv", columns)
        io.atomic_write_text(out_dir / "ks_report.txt", "\n".join(report) + "\n")
    manifest = _manifest("compare", _args_dict(args), None, out_dir)
    manifest.inputs[str(args.k_samples)] = io.sha256_file(args.k_samples)
    if args.theory_curve:
        manifest.inputs[str(args.theory_curve)] = io.sha256_file(args.theory_curve)
    manifest.outputs = ["overlay.csv", "ks_report.txt"]
    manifest.warnings = warnings
    manifest.extras["ks"] = {"theory": d_theory, "gaussian": d_gauss}
    _finish(manifest, out_dir, watch)
    print("\n".join(report))
    return 0

# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="scatterlab",
        description="Chaotic two-port scattering laboratory",
    )
    p.add_argument("--version", action="version", version=f"scatterlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("simulate-graph", help="network-ensemble S matrices")
    g.add_argument("--preset", default="nine-joint")
    g.add_argument("--network", type=Path, help="network description file (overrides preset)")
    g.add_argument("--realizations", type=int, default=50)
    g.add_argument("--samples-per-realization", type=int, default=101)
    g.add_argument("--freq-min-ghz", type=float, default=3.0)
    g.add_argument("--freq-max-ghz", type=float, default=7.0)
    g.add_argument("--k-min", type=float, help="wavenumber window start (overrides GHz)")
    g.add_argument("--k-max", type=float)
    g.add_argument("--delta-max", type=float, default=0.02,
                   help="phase-shifter half-range in meters")
    g.add_argument("--loss", type=float, help="override per-length loss (nepers/m)")
    g.add_argument("--no-circulators", action="store_true")
    g.add_argument("--dump-network", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", default="runs/graph")
    g.set_defaults(func=cmd_simulate_graph)

    r = sub.add_parser("simulate-rmt", help="effective-Hamiltonian ensemble S matrices")
    r.add_argument("--preset", help=f"one of {sorted(rmt.PRESETS)}")
    r.add_argument("--beta", type=int, default=2, choices=(1, 2))
    r.add_argument("--n-dim", type=int, default=200)
    r.add_argument("--n-samples", type=int, default=20000)
    r.add_argument("--t-a", type=float, default=0.89)
    r.add_argument("--t-b", type=float, default=0.89)
    r.add_argument("--m-channels", type=int, default=100)
    r.add_argument("--t-c", type=float, default=0.0361)
    r.add_argument("--gamma", type=float, help="loss parameter for shift mode")
    r.add_argument("--absorption-mode", choices=("channels", "shift"), default="channels")
    r.add_argument("--energy-window", type=float, default=0.05)
    r.add_argument("--no-calibration", action="store_true")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out-dir", default="runs/rmt")
    r.set_defaults(func=cmd_simulate_rmt)

    t = sub.add_parser("theory", help="exact reaction-matrix element densities")
    t.add_argument("--gamma", type=float, action="append",
                   help="loss parameter (repeatable)")
    t.add_argument("--nodes", type=int, default=801)
    t.add_argument("--joint-nodes", type=int, default=201)
    t.add_argument("--out-dir", default="runs/theory")
    t.set_defaults(func=cmd_theory)

    a = sub.add_parser("analyze", help="K matrices, transmissions, W, distributions")
    a.add_argument("--samples", type=Path, action="append",
                   help="sample CSV (repeatable)")
    a.add_argument("--touchstone", type=Path, action="append",
                   help="two-port Touchstone-style file (repeatable)")
    a.add_argument("--estimator", choices=("histogram", "kernel"), default="histogram")
    a.add_argument("--subtract-mean-s", action="store_true",
                   help="remove the ensemble-averaged S before the Cayley map")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out-dir", default="runs/analysis")
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("fit", help="fit the loss parameter to K_ab marginals")
    f.add_argument("--k-samples", type=Path, required=True,
                   help="K-sample CSV from analyze")
    f.add_argument("--objective", choices=("ks", "ise"), default="ks")
    f.add_argument("--t-a", type=float)
    f.add_argument("--t-b", type=float)
    f.add_argument("--m-channels", type=int)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out-dir", default="runs/fit")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("compare", help="empirical vs theory vs Gaussian overlay")
    c.add_argument("--k-samples", type=Path, required=True)
    c.add_argument("--part", choices=("re", "im", "pooled"), default="pooled")
    c.add_argument("--gamma", type=float)
    c.add_argument("--theory-curve", type=Path)
    c.add_argument("--gaussian", action="store_true")
    c.add_argument("--out-dir", default="runs/compare")
    c.set_defaults(func=cmd_compare)

    m = sub.add_parser("rerun", help="re-run a command from its manifest")
    m.add_argument("manifest", type=Path)
    m.add_argument("--out-dir", help="override the output directory")
    m.set_defaults(func=None)
    return p

_NUMERIC_ERRORS = (stats.FitError, theory.QuadratureError,
                   np.linalg.LinAlgError, FloatingPointError)
_VALIDATION_ERRORS = (ValueError, KeyError, io.SampleFormatError)

def _rerun(args, parser) -> int:
    manifest = io.RunManifest.load(args.manifest)
    argv = [manifest.command]
    for key, val in manifest.config.items():
        if key in ("resolved_window", "network_name", "gamma_decomposition"):
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(val, bool):
            if val:
                argv.append(flag)
        elif isinstance(val, list):
            for item in val:
                argv += [flag, str(item)]
        elif val is not None:
            argv += [flag, str(val)]
    if args.out_dir:
        idx = argv.index("--out-dir")
        argv[idx + 1] = args.out_dir
    replay = parser.parse_args(argv)
    return replay.func(replay)

def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            return _rerun(args, parser)
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _VALIDATION_ERRORS as exc:
        print(f"error (validation): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO

if __name__ == "__main__":
    sys.exit(main())
