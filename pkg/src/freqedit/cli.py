"""Command-line surface: pipelines, experiments and reports.

Every command is deterministic given its flags and seed. Reports are
pretty-printed, key-sorted JSON; exit code 0 means success, 1 means an
acceptance threshold was not met, 2 means a usage or I/O problem.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from .errors import FreqEditError
from .fileio import read_flow_pfm, read_image, write_image, write_pfm
from .flow import (FlowField, SmoothPairGenerator, build_problem,
                   consistency_score, small_mu_expansion,
                   smoothing_consistency_trials)
from .image import BoundaryMode, Image, LowpassConfig, gaussian_lowpass
from .metrics import MetricError, PairScore, sharpness, warped_rmse
from .pipeline import (BlendParams, blend_detail, decompose, enhance_masked,
                       enhance_simple, intensity_mix, mask_recompose)
from .render import load_scene_file, make_pair_dataset, render_views
from .styles import apply_style, style_from_json

BOUNDARIES = {"circular": BoundaryMode.CIRCULAR, "reflect": BoundaryMode.REFLECT}


def _dump_json(obj, out_path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out_path is None:
        click.echo(text, nl=False)
    else:
        Path(out_path).write_text(text, encoding="utf-8")


def _fail_on_toolkit_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (FreqEditError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
    return wrapper


def _config_option(fn):
    return click.option("--config", "config_path",
                        type=click.Path(exists=True, dir_okay=False), default=None,
                        help="JSON file of parameter defaults; explicit flags win.")(fn)


def _merge_config(ctx, config_path, values: dict) -> dict:
    """Fill parameters from a JSON config file; flags given on the command
    line keep their value. Unknown keys are usage errors."""
    if config_path is None:
        return values
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"invalid config JSON '{config_path}': {exc}")
    if not isinstance(overrides, dict):
        raise click.UsageError(f"config '{config_path}' must hold a JSON object")
    merged = dict(values)
    for key, value in overrides.items():
        name = key.replace("-", "_")
        if name not in merged:
            raise click.UsageError(f"config '{config_path}' has unknown key '{key}'")
        if ctx.get_parameter_source(name) is ParameterSource.DEFAULT:
            merged[name] = value
    return merged


def _lowpass_options(fn):
    fn = click.option("--sigma", type=float, default=2.0, show_default=True,
                      help="Gaussian low-pass sigma in pixels.")(fn)
    fn = click.option("--downscale", type=int, default=4, show_default=True,
                      help="Low-band resolution reduction factor.")(fn)
    fn = click.option("--boundary", type=click.Choice(sorted(BOUNDARIES)),
                      default="circular", show_default=True,
                      help="Border handling for smoothing.")(fn)
    return fn


def _cfg(sigma, downscale, boundary) -> LowpassConfig:
    if str(boundary) not in BOUNDARIES:
        raise click.UsageError(f"unknown boundary '{boundary}'")
    return LowpassConfig(sigma=float(sigma), downscale=int(downscale),
                         boundary=BOUNDARIES[str(boundary)])


@click.group()
def main():
    """Frequency-split image editing and multi-view consistency tools."""


@main.command(name="decompose")
@click.argument("input_png", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@_lowpass_options
@_config_option
@click.pass_context
@_fail_on_toolkit_errors
def cmd_decompose(ctx, input_png, out_dir, sigma, downscale, boundary, config_path):
    """Split INPUT_PNG into low.png, high.pfm and recon.png in OUT_DIR."""
    params = _merge_config(ctx, config_path,
                           {"sigma": sigma, "downscale": downscale, "boundary": boundary})
    img = read_image(input_png)
    dec = decompose(img, _cfg(params["sigma"], params["downscale"], params["boundary"]))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_image(dec.low_ds, out / "low.png")
    high = dec.high.data
    write_pfm(out / "high.pfm", high[:, :, 0] if high.shape[2] == 1 else high)
    write_image(dec.low_full + dec.high, out / "recon.png")
    recon_err = float(np.abs((dec.low_full + dec.high).data - img.data).max())
    if recon_err > 1e-6:
        click.echo(f"error: reconstruction drifted by {recon_err:g}", err=True)
        sys.exit(1)


@main.command(name="edit")
@click.argument("input_png", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_png", type=click.Path(dir_okay=False))
@click.option("--style", "style_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="JSON style description.")
@click.option("--level", type=float, default=1.0, show_default=True,
              help="Edit intensity; 0 reproduces the input.")
@click.option("--alpha", type=float, default=1.0, show_default=True,
              help="How much original high-frequency detail to blend back.")
@_lowpass_options
@_config_option
@click.pass_context
@_fail_on_toolkit_errors
def cmd_edit(ctx, input_png, output_png, style_path, level, alpha, sigma, downscale,
             boundary, config_path):
    """Restyle the low band of INPUT_PNG and write the detail-blended result."""
    params = _merge_config(ctx, config_path,
                           {"level": level, "alpha": alpha, "sigma": sigma,
                            "downscale": downscale, "boundary": boundary})
    with open(style_path, "r", encoding="utf-8") as fh:
        try:
            style = style_from_json(json.load(fh))
        except json.JSONDecodeError as exc:
            click.echo(f"error: invalid style JSON '{style_path}': {exc}", err=True)
            sys.exit(2)
    img = read_image(input_png)
    dec = decompose(img, _cfg(params["sigma"], params["downscale"], params["boundary"]))
    styled = apply_style(style, dec.low_ds)
    mixed = intensity_mix(dec.low_ds, styled, float(params["level"]))
    write_image(blend_detail(mixed, dec, float(params["alpha"])), output_png)


@main.command(name="enhance")
@click.argument("edited_png", type=click.Path(exists=True, dir_okay=False))
@click.argument("original_png", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_png", type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["simple", "masked"]), default="simple",
              show_default=True)
@click.option("--lambda1", type=float, default=1.0, show_default=True,
              help="Edited-detail weight (masked mode).")
@click.option("--lambda2", type=float, default=1.0, show_default=True,
              help="Original-detail weight (masked mode).")
@_lowpass_options
@_config_option
@click.pass_context
@_fail_on_toolkit_errors
def cmd_enhance(ctx, edited_png, original_png, output_png, mode, lambda1, lambda2,
                sigma, downscale, boundary, config_path):
    """Re-blend the original's high band into an edited image."""
    params = _merge_config(ctx, config_path,
                           {"mode": mode, "lambda1": lambda1, "lambda2": lambda2,
                            "sigma": sigma, "downscale": downscale,
                            "boundary": boundary})
    edited = read_image(edited_png)
    original = read_image(original_png)
    cfg = _cfg(params["sigma"], params["downscale"], params["boundary"])
    if params["mode"] == "simple":
        result = enhance_simple(edited, original, cfg)
    else:
        weights = BlendParams(alpha=1.0, lambda1=float(params["lambda1"]),
                              lambda2=float(params["lambda2"]))
        result = enhance_masked(edited, original, weights, cfg)
    write_image(result, output_png)


@main.command(name="recompose")
@click.argument("edited_png", type=click.Path(exists=True, dir_okay=False))
@click.argument("original_png", type=click.Path(exists=True, dir_okay=False))
@click.argument("mask_png", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_png", type=click.Path(dir_okay=False))
@_fail_on_toolkit_errors
def cmd_recompose(edited_png, original_png, mask_png, output_png):
    """Combine edited and original per a mask: mask*edited + (1-mask)*original."""
    edited = read_image(edited_png)
    original = read_image(original_png)
    mask = read_image(mask_png).luminance()
    write_image(mask_recompose(edited, original, mask), output_png)


@main.command(name="consistency")
@click.argument("image1", type=click.Path(exists=True, dir_okay=False))
@click.argument("image2", type=click.Path(exists=True, dir_okay=False))
@click.option("--mu", type=float, default=1e-3, show_default=True,
              help="Data-term weight; small keeps the flow smooth.")
@click.option("--smooth-sigma", type=float, default=None,
              help="Also score the pair after Gaussian smoothing at this sigma.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the JSON report here instead of stdout.")
@_config_option
@click.pass_context
@_fail_on_toolkit_errors
def cmd_consistency(ctx, image1, image2, mu, smooth_sigma, out_path, config_path):
    """Score how consistent two views are under the smoothest explaining flow."""
    params = _merge_config(ctx, config_path, {"mu": mu, "smooth_sigma": smooth_sigma})
    mu = float(params["mu"])
    smooth_sigma = params["smooth_sigma"]
    i1 = read_image(image1)
    i2 = read_image(image2)
    report = consistency_score(i1, i2, mu)
    payload = {"raw": report.to_json_dict()}
    if smooth_sigma is not None:
        cfg = LowpassConfig(sigma=float(smooth_sigma), downscale=1)
        smoothed = consistency_score(gaussian_lowpass(i1, cfg),
                                     gaussian_lowpass(i2, cfg), mu)
        payload["smoothed"] = smoothed.to_json_dict()
        payload["smooth_sigma"] = float(smooth_sigma)
        payload["smoothed_lt_raw"] = bool(smoothed.score < report.score)
    _dump_json(payload, out_path)


@main.command(name="verify")
@click.option("--trials", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--size", type=int, default=16, show_default=True,
              help="Side length of the square test pairs.")
@click.option("--sigma", type=float, default=1.5, show_default=True,
              help="Smoothing sigma whose effect on the score is measured.")
@click.option("--mu", type=float, default=1e-3, show_default=True)
@click.option("--styled/--no-styled", default=False, show_default=True,
              help="Compose a random affine color edit on top of the smoothing.")
@click.option("--flow-source", type=click.Choice(["scored", "unstyled"]),
              default="scored", show_default=True,
              help="Solve the flow on the scored pair or on the pre-style pair.")
@click.option("--threshold", type=float, default=0.99, show_default=True,
              help="Required strict-decrease fraction.")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Also write per-trial score pairs as CSV.")
@_config_option
@click.pass_context
@_fail_on_toolkit_errors
def cmd_verify(ctx, trials, seed, size, sigma, mu, styled, flow_source, threshold,
               threads, out_path, csv_path, config_path):
    """Measure how often smoothing strictly lowers the consistency score.

    Exits 1 when the strict fraction over non-degenerate trials falls below
    the threshold.
    """
    params = _merge_config(ctx, config_path, {
        "trials": trials, "seed": seed, "size": size, "sigma": sigma, "mu": mu,
        "styled": styled, "flow_source": flow_source, "threshold": threshold,
        "threads": threads})
    trials, seed, size = int(params["trials"]), int(params["seed"]), int(params["size"])
    threshold = float(params["threshold"])
    if trials < 1:
        raise click.UsageError(f"--trials must be >= 1, got {trials}")
    gen = SmoothPairGenerator(height=size, width=size, seed=seed)
    cfg = LowpassConfig(sigma=float(params["sigma"]), downscale=1,
                        boundary=BoundaryMode.CIRCULAR)
    report = smoothing_consistency_trials(trials, gen, cfg, float(params["mu"]),
                                          styled=bool(params["styled"]),
                                          flow_source=str(params["flow_source"]),
                                          threads=int(params["threads"]))
    payload = report.to_json_dict()
    payload["threshold"] = threshold
    payload["passed"] = bool(report.strict_fraction >= threshold)
    if csv_path is not None:
        report.write_csv(csv_path)
    _dump_json(payload, out_path)
    if not payload["passed"]:
        sys.exit(1)


@main.command(name="expansion")
@click.option("--size", type=int, default=8, show_default=True,
              help="Side length of the dense test problem (capped at 12).")
@click.option("--mu", type=float, default=1e-4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@_config_option
@click.pass_context
@_fail_on_toolkit_errors
def cmd_expansion(ctx, size, mu, seed, out_path, config_path):
    """Check the first-order small-mu behavior of the score's projector.

    Runs the dense comparison at mu and at mu/2; the error should shrink by
    roughly 4x.
    """
    params = _merge_config(ctx, config_path, {"size": size, "mu": mu, "seed": seed})
    size, mu, seed = int(params["size"]), float(params["mu"]), int(params["seed"])
    gen = SmoothPairGenerator(height=size, width=size, seed=seed)
    i1, i2 = gen.pair(0)
    lum1, lum2 = i1.luminance(), i2.luminance()
    reports = {}
    for label, m in (("mu", mu), ("half_mu", mu / 2)):
        prob = build_problem(lum1, lum2, m)
        reports[label] = small_mu_expansion(prob).to_json_dict()
    ratio = reports["mu"]["error_norm"] / max(reports["half_mu"]["error_norm"], 1e-300)
    _dump_json({"size": size, "seed": seed, "at_mu": reports["mu"],
                "at_half_mu": reports["half_mu"], "error_ratio": ratio}, out_path)


@main.command(name="render")
@click.argument("scene_json", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@_fail_on_toolkit_errors
def cmd_render(scene_json, out_dir):
    """Render every camera in SCENE_JSON to OUT_DIR (color, depth, feature)."""
    scene, cameras, cfg = load_scene_file(scene_json)
    if not cameras:
        raise click.UsageError("scene file declares no cameras")
    rendered = render_views(scene, cameras, cfg, out_dir)
    _dump_json({"n_views": len(cameras), "views": rendered["views"]},
               Path(out_dir) / "views.json")


@main.command(name="dataset")
@click.argument("scene_json", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@_fail_on_toolkit_errors
def cmd_dataset(scene_json, out_dir):
    """Render a camera path with ground-truth pair flows and a manifest."""
    scene, cameras, cfg = load_scene_file(scene_json)
    manifest = make_pair_dataset(scene, cameras, cfg, out_dir)
    click.echo(f"wrote {manifest['n_views']} views, "
               f"{len(manifest['short_term'])} short-term and "
               f"{len(manifest['long_term'])} long-term pairs to {out_dir}")


def _score_pair(dataset: Path, views, pair) -> PairScore:
    src = read_image(dataset / views[pair["src"]]["color"])
    dst = read_image(dataset / views[pair["dst"]]["color"])
    u_x, u_y, valid = read_flow_pfm(dataset / pair["flow"])
    flow = FlowField(u_x, u_y)
    try:
        return warped_rmse(dst, src, flow, Image(valid.astype(np.float64)))
    except MetricError:
        # Nothing visible in both views (for example an empty scene): there
        # is no overlap to disagree on, so the pair scores zero.
        return PairScore(rmse=0.0, valid_fraction=0.0, n_pixels=0)


@main.command(name="metrics")
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@_fail_on_toolkit_errors
def cmd_metrics(dataset_dir, out_path):
    """Score a rendered dataset: warped RMSE per pair plus per-view sharpness."""
    dataset = Path(dataset_dir)
    manifest_path = dataset / "manifest.json"
    if not manifest_path.exists():
        raise click.UsageError(f"no manifest.json under '{dataset_dir}'")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    views = manifest["views"]
    payload = {
        "short_term": [dict(pair, **_score_pair(dataset, views, pair).to_json_dict())
                       for pair in manifest["short_term"]],
        "long_term": [dict(pair, **_score_pair(dataset, views, pair).to_json_dict())
                      for pair in manifest["long_term"]],
        "sharpness": [{"index": view["index"],
                       "value": sharpness(read_image(dataset / view["color"]))}
                      for view in views],
    }
    _dump_json(payload, out_path)


if __name__ == "__main__":
    main()
