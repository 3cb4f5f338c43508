"""Stage runners that turn a customer table into the report bundle.

Each stage reads what it needs from earlier stages' artifacts in the
output directory, so ``select -> elbow -> cluster`` and ``select -> boost
-> rank`` can be run one at a time or all at once.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import svg
from .boost import (
    GbmParams,
    best_iteration_oob,
    gbm_fit,
    interaction_grid,
    partial_dependence,
    relative_influence,
    smooth,
)
from .cluster import (
    cluster_sizes_table,
    detect_elbow,
    elbow_curve,
    kmeans_fit,
    pca_project_2d,
    sigma_band_grouping,
)
from .dataset import (
    PREDICTOR_COLUMNS,
    SCHEMA,
    TARGET_COLUMN,
    CustomerTable,
    FeatureMatrix,
    Scaling,
    load_csv,
    read_kv_file,
    standardize,
)
from .errors import ConfigError, InputError, SegrankError
from .linreg import (
    clustering_dimensions,
    fit_ols,
    log_transform_target,
    report_json,
    report_table,
    select_features,
)
from .rank import (
    compute_weights,
    read_weight_override,
    scale_matrix,
    score_customers,
    scorecard_json,
    top_report,
    write_scorecard_csv,
)

STAGES = ("select-features", "elbow", "cluster", "boost", "rank")


class StageError(SegrankError):
    """A stage failed; carries the stage name and the underlying exit code."""

    def __init__(self, stage: str, cause: BaseException, exit_code: int):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.exit_code = exit_code


@dataclass(frozen=True)
class PipelineConfig:
    input_path: str = ""
    output_dir: str = "report"
    alpha: float = 0.01
    k_max: int = 15
    k_override: int | None = None
    elbow_method: str = "curvature"
    n_restarts: int = 10
    max_iter: int = 300
    standardize: bool = True
    n_trees: int = 5000
    shrinkage: float = 0.01
    interaction_depth: int = 3
    bag_fraction: float = 0.5
    min_node: int = 10
    seed: int = 0
    oob_window: int = 11
    pdp_grid: int = 50
    interaction_grid: int = 25
    interaction_vars: tuple[str, str] = ("assets", "process_fee")
    pdp_rows: int = 10_000
    scaling: str = "percentile"
    directions: bool = True
    weights_file: str = ""
    top_n: int = 20
    scatter_points: int = 2000

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.k_max < 3:
            raise ConfigError(f"k_max must be >= 3, got {self.k_max}")
        if self.k_override is not None and self.k_override < 1:
            raise ConfigError(f"k_override must be >= 1, got {self.k_override}")
        if self.elbow_method not in ("curvature", "chord"):
            raise ConfigError(f"elbow_method must be curvature or chord, got {self.elbow_method}")
        if self.scaling not in ("percentile", "minmax"):
            raise ConfigError(f"scaling must be percentile or minmax, got {self.scaling}")
        for name in ("n_restarts", "max_iter", "oob_window", "pdp_grid", "interaction_grid",
                     "top_n"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.pdp_rows < 0 or self.scatter_points < 0:
            raise ConfigError("pdp_rows and scatter_points must be >= 0")
        if len(self.interaction_vars) != 2 or self.interaction_vars[0] == self.interaction_vars[1]:
            raise ConfigError("interaction_vars needs two distinct column names")
        self.gbm_params()

    def gbm_params(self) -> GbmParams:
        return GbmParams(
            n_trees=self.n_trees,
            shrinkage=self.shrinkage,
            interaction_depth=self.interaction_depth,
            bag_fraction=self.bag_fraction,
            min_node=self.min_node,
            seed=self.seed,
        )

    @classmethod
    def from_sources(cls, env: Mapping[str, str], file_values: Mapping[str, str],
                     flags: Mapping[str, object]) -> "PipelineConfig":
        """Merge settings; later sources win: SEGRANK_SEED, config file, flags."""
        raw: dict[str, object] = {}
        if env.get("SEGRANK_SEED"):
            raw["seed"] = env["SEGRANK_SEED"]
        raw.update(file_values)
        raw.update({k: v for k, v in flags.items() if v is not None})
        return cls(**{k: _convert(k, v) for k, v in raw.items()})


_KINDS = {f.name: f.type for f in fields(PipelineConfig)}


def _convert(key: str, value):
    if key not in _KINDS:
        raise ConfigError(f"unknown config key: {key}")
    kind = _KINDS[key]
    if not isinstance(value, str):
        return tuple(value) if kind.startswith("tuple") else value
    text = value.strip()
    try:
        if kind == "bool":
            if text.lower() not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes", "on")
        if kind.startswith("int"):
            return None if text.lower() in ("", "none") else int(text)
        if kind == "float":
            return float(text)
        if kind.startswith("tuple"):
            return tuple(part.strip() for part in text.split(","))
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return text


# ---------------------------------------------------------------- helpers

def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _write_json(path: Path, doc) -> None:
    _write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path):
    if not path.exists():
        raise InputError(f"missing artifact {path}; run the earlier stage first")
    return json.loads(path.read_text(encoding="utf-8"))


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _num(x) -> str:
    return repr(float(x))


class Run:
    """One invocation's configuration, input table and output directory."""

    def __init__(self, cfg: PipelineConfig, table: CustomerTable | None = None):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self._table = table

    @property
    def table(self) -> CustomerTable:
        if self._table is None:
            if not self.cfg.input_path:
                raise InputError("no input file given")
            self._table = load_csv(self.cfg.input_path)
        return self._table

    def prepare(self) -> None:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputError(f"cannot create output directory {self.out}: {exc}") from None
        if not os.access(self.out, os.W_OK):
            raise InputError(f"output directory {self.out} is not writable")

    # ------------------------------------------------------------ stages

    def select_features(self) -> list[str]:
        m = self.table.matrix
        logs, excluded = log_transform_target(m.column(TARGET_COLUMN))
        keep = np.setdiff1d(np.arange(m.n_rows), excluded)
        fit = fit_ols(m.select(PREDICTOR_COLUMNS).take(keep), logs)
        retained = select_features(fit, self.cfg.alpha)
        _write(self.out / "selection.txt", report_table(fit, retained))
        _write(self.out / "selection.json",
               report_json(fit, retained, self.cfg.alpha, int(excluded.size)))
        return retained

    def retained(self) -> list[str]:
        return list(_read_json(self.out / "selection.json")["retained"])

    def _clustering_space(self, retained: list[str]) -> tuple[FeatureMatrix, Scaling | None]:
        m = self.table.matrix.select(clustering_dimensions(retained, SCHEMA))
        if not self.cfg.standardize:
            return m, None
        return standardize(m)

    def elbow(self, retained: list[str]) -> tuple[int, bool]:
        cfg = self.cfg
        Z, _ = self._clustering_space(retained)
        curve = elbow_curve(Z, cfg.k_max, seed=cfg.seed, n_restarts=cfg.n_restarts,
                            max_iter=cfg.max_iter)
        k, no_elbow = detect_elbow(curve, cfg.elbow_method)
        _write_rows(self.out / "elbow.csv", ["k", "inertia"],
                    [(k_, _num(c)) for k_, c in zip(curve.ks, curve.costs)])
        _write_json(self.out / "elbow.json", {
            **curve.to_dict(), "method": cfg.elbow_method, "k": k, "no_elbow": no_elbow,
        })
        _write(self.out / "elbow.svg", svg.emit_svg(svg.LinePlot(
            [svg.Series(curve.ks, curve.costs, "within-cluster sum of squares")],
            title="Elbow curve", xlabel="number of clusters k", ylabel="inertia",
            vline=None if no_elbow else k,
        )))
        return k, no_elbow

    def chosen_k(self) -> int:
        if self.cfg.k_override is not None:
            return self.cfg.k_override
        return int(_read_json(self.out / "elbow.json")["k"])

    def cluster(self, retained: list[str], k: int) -> dict:
        cfg = self.cfg
        table = self.table
        m = table.matrix
        Z, scaling = self._clustering_space(retained)
        model = kmeans_fit(Z, k, seed=cfg.seed, max_iter=cfg.max_iter,
                           n_restarts=cfg.n_restarts, scaling=scaling)
        sizes = cluster_sizes_table(model, m.column(TARGET_COLUMN))
        proj = pca_project_2d(Z)
        doc = model.to_dict()
        doc["cluster_table"] = sizes
        doc["pca_explained_fraction"] = proj.explained_fraction
        _write_json(self.out / "cluster_model.json", doc)
        _write_rows(
            self.out / "cluster_scores.csv", ["customer_code", "cluster", "pc1", "pc2"],
            [(c, int(a) + 1, _num(s[0]), _num(s[1]))
             for c, a, s in zip(table.codes, model.assignments, proj.scores)],
        )
        shown = np.arange(m.n_rows)
        note = ""
        if cfg.scatter_points and m.n_rows > cfg.scatter_points:
            rng = np.random.Generator(np.random.PCG64(cfg.seed))
            shown = np.sort(rng.choice(m.n_rows, cfg.scatter_points, replace=False))
            note = f"{cfg.scatter_points} of {m.n_rows} customers shown"
        pct = 100.0 * proj.explained_fraction
        _write(self.out / "cluster_scatter.svg", svg.emit_svg(svg.ScatterPlot(
            proj.scores[shown, 0], proj.scores[shown, 1], model.assignments[shown],
            title=f"Clusters on the first two components ({pct:.2f}% of variability)",
            xlabel="component 1", ylabel="component 2", note=note,
        )))

        grouping = sigma_band_grouping(m.column(TARGET_COLUMN), m.column("assets"))
        _write_json(self.out / "sigma_groups.json", grouping.to_dict())
        _write_rows(
            self.out / "sigma_groups.csv", ["customer_code", "assets", "z", "group"],
            [(table.codes[r], _num(m.values[r, m.index("assets")]), _num(z), int(g))
             for r, z, g in zip(grouping.core_rows, grouping.z_scores, grouping.group_of)],
        )
        return {"k": k, "sizes": model.sizes.tolist()}

    def boost(self, retained: list[str]) -> dict:
        cfg = self.cfg
        m = self.table.matrix
        X = m.select(retained)
        y = m.column(TARGET_COLUMN)
        model = gbm_fit(X, y, cfg.gbm_params())
        _write_json(self.out / "gbm_model.json", model.to_dict())
        if model.n_trees == 0:
            raise SegrankError("boosting produced no trees (constant target)")
        # A full bag leaves no out-of-bag rows to judge by, so every tree is kept.
        best = model.n_trees if cfg.bag_fraction >= 1.0 else best_iteration_oob(model, cfg.oob_window)
        its = np.arange(1, model.n_trees + 1)
        sm = smooth(model.oob_improvement, cfg.oob_window)
        _write_rows(
            self.out / "oob.csv",
            ["iteration", "oob_improvement", "smoothed", "cumulative", "train_loss"],
            [(i, _num(a), _num(b), _num(c), _num(d)) for i, a, b, c, d in
             zip(its, model.oob_improvement, sm, np.cumsum(sm), model.train_loss)],
        )
        _write(self.out / "oob.svg", svg.emit_svg(svg.LinePlot(
            [svg.Series(its, np.cumsum(sm), "cumulative smoothed OOB improvement")],
            title=f"OOB convergence (best iteration {best})", xlabel="iteration",
            ylabel="cumulative improvement", markers=False, vline=best,
        )))

        infl = relative_influence(model, best)
        ranked = infl.ranked()
        _write_rows(self.out / "influence.csv", ["variable", "relative_influence"],
                    [(v, _num(x)) for v, x in ranked])
        _write(self.out / "influence.svg", svg.emit_svg(svg.BarChart(
            [v for v, _ in ranked], [x for _, x in ranked],
            title="Relative influence", xlabel="relative influence (%)",
        )))

        rows = X
        if cfg.pdp_rows and X.n_rows > cfg.pdp_rows:
            # Marginalize over a fixed sample of rows; regenerated identically from the seed.
            rng = np.random.Generator(np.random.PCG64([cfg.seed, 1]))
            rows = X.take(np.sort(rng.choice(X.n_rows, cfg.pdp_rows, replace=False)))
        directions = {}
        for var in retained:
            pd = partial_dependence(model, rows, var, n_grid=cfg.pdp_grid, n_trees=best)
            directions[var] = -1 if pd.slope_sign() < 0 else 1
            _write_rows(self.out / f"pdp_{var}.csv", [var, "partial_dependence"],
                        [(_num(g), _num(v)) for g, v in zip(pd.grid, pd.pd_values)])
            _write(self.out / f"pdp_{var}.svg", svg.emit_svg(svg.LinePlot(
                [svg.Series(pd.grid, pd.pd_values, "")],
                title=f"Partial dependence on {var}", xlabel=var,
                ylabel=f"predicted {TARGET_COLUMN}", markers=False,
            )))

        h = None
        a, b = cfg.interaction_vars
        if a in retained and b in retained:
            ig = interaction_grid(model, rows, a, b, n_grid=cfg.interaction_grid, n_trees=best)
            h = ig.h_statistic
            _write_rows(
                self.out / f"interaction_{a}__{b}.csv", [a, b, "partial_dependence"],
                [(_num(ga), _num(gb), _num(ig.pd_values[i, j]))
                 for i, ga in enumerate(ig.grid_a) for j, gb in enumerate(ig.grid_b)],
            )
            _write(self.out / f"interaction_{a}__{b}.svg", svg.emit_svg(svg.Heatmap(
                ig.pd_values.T, x_ticks=ig.grid_a, y_ticks=ig.grid_b,
                title=f"Joint partial dependence (H = {h:.3f})", xlabel=a, ylabel=b,
            )))

        summary = {
            "best_iteration": best,
            "n_trees": model.n_trees,
            "influence": infl.as_dict(),
            "influence_degenerate": infl.degenerate,
            "directions": directions,
            "interaction_h": h,
        }
        _write_json(self.out / "boost_summary.json", summary)
        return summary

    def rank(self, boost_summary: Mapping | None = None) -> list:
        cfg = self.cfg
        if boost_summary is None:
            boost_summary = _read_json(self.out / "boost_summary.json")
        features = list(boost_summary["influence"])
        if cfg.weights_file:
            weights = read_weight_override(read_kv_file(cfg.weights_file), features)
        else:
            weights = compute_weights([boost_summary["influence"][f] for f in features])
        directions = [
            int(boost_summary["directions"].get(f, 1)) if cfg.directions else 1 for f in features
        ]
        table = self.table
        scaled = scale_matrix(table.matrix.select(features).values, directions, cfg.scaling)
        card = score_customers(weights, scaled, table.codes, features, directions, cfg.scaling)
        write_scorecard_csv(self.out / "scorecard.csv", card)
        _write(self.out / "scorecard.json", scorecard_json(card))
        _write(self.out / "top.txt", top_report(card, cfg.top_n))
        return card.top(cfg.top_n)

    # ------------------------------------------------------------ driver

    def stage(self, name: str, fn, *args):
        try:
            return fn(*args)
        except SegrankError as exc:
            if isinstance(exc, (StageError, InputError)):
                raise
            raise StageError(name, exc, exc.exit_code) from exc
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise StageError(name, exc, 3) from exc
        except OSError as exc:
            raise StageError(name, exc, 1) from exc

    def pipeline(self) -> dict:
        self.prepare()
        self.table  # load before any stage so a bad input fails as an input error
        retained = self.stage("select-features", self.select_features)
        k, no_elbow = self.stage("elbow", self.elbow, retained)
        if self.cfg.k_override is not None:
            k = self.cfg.k_override
        cluster = self.stage("cluster", self.cluster, retained, k)
        boost = self.stage("boost", self.boost, retained)
        self.stage("rank", self.rank, boost)
        summary = {
            "seed": self.cfg.seed,
            "k": k,
            "k_source": "override" if self.cfg.k_override is not None else "elbow",
            "no_elbow": no_elbow,
            "cluster_sizes": cluster["sizes"],
            "best_iteration": boost["best_iteration"],
            "retained_features": retained,
            "n_customers": len(self.table),
            # Paths stay out so bundles written to different places compare equal.
            "config": {k_: (list(v) if isinstance(v, tuple) else v)
                       for k_, v in asdict(self.cfg).items()
                       if k_ not in ("input_path", "output_dir", "weights_file")},
        }
        _write_json(self.out / "summary.json", summary)
        return summary
