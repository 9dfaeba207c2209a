import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import pandas as pd

from covrankpy import utils
from covrankpy.bootstrap import BootstrapConfig
from covrankpy.io import read_json, write_json
from covrankpy.rank_test import choose_d, sequential_rank_test
from covrankpy.simmodels import ModelSpec, generate_model, get_model_spec
from covrankpy.utils import DataError

logger = logging.getLogger(__name__)

__all__ = ["ScenarioConfig", "ScenarioResult", "run_scenario", "write_table", "load_scenario"]


@dataclass(frozen=True)
class ScenarioConfig:
    """Repeated simulation of one model at one sample size and grid

    Attributes:
        model (str, ModelSpec): registered model name or a model spec.
        n (int): curves per dataset.
        L (int): grid size.
        reps (int): number of datasets, >= 1.
        alpha (float): level of the stepwise test.
        bootstrap (BootstrapConfig): bootstrap settings; its seed is replaced per replication.
        master_seed (int): seed every replication seed is derived from.
        noise (str): noise profile override for a registered model, None keeps the model's own.
        workers (int): replications run concurrently; with workers > 1 and bootstrap.threads None each replication
            bootstraps on one thread.
    """

    model: object = "A1"
    n: int = 150
    L: int = 25
    reps: int = 50
    alpha: float = 0.05
    bootstrap: BootstrapConfig = field(default_factory=lambda: BootstrapConfig(B=200))
    master_seed: int = 0
    noise: str = None
    workers: int = 1

    def __post_init__(self):
        if int(self.reps) < 1:
            raise DataError(f"Invalid 'reps' argument: {self.reps}, need reps >= 1")

        if int(self.workers) < 1:
            raise DataError(f"Invalid 'workers' argument: {self.workers}")

        if isinstance(self.bootstrap, dict):
            object.__setattr__(self, "bootstrap", BootstrapConfig.from_dict(self.bootstrap))

        if isinstance(self.model, dict):
            object.__setattr__(self, "model", ModelSpec.from_dict(self.model))

    def spec(self):
        """The ModelSpec simulated by this scenario"""

        if isinstance(self.model, ModelSpec):
            return replace(self.model, noise=self.noise) if self.noise else self.model

        return get_model_spec(self.model, noise=self.noise)

    def to_dict(self):
        return {
            "model":       self.model.to_dict() if isinstance(self.model, ModelSpec) else self.model,
            "n":           self.n,
            "L":           self.L,
            "reps":        self.reps,
            "alpha":       self.alpha,
            "bootstrap":   self.bootstrap.to_dict(),
            "master_seed": self.master_seed,
            "noise":       self.noise,
            "workers":     self.workers,
            }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)

        if unknown:
            raise DataError(f"Unknown ScenarioConfig keys: {sorted(unknown)}")

        return cls(**d)


@dataclass
class ScenarioResult:
    """Frequency table of the estimated ranks and the per-replication records"""

    table: pd.DataFrame
    records: pd.DataFrame
    config: ScenarioConfig

    def count(self, rank):
        """Number of replications with the given rank label"""

        hits = self.table.loc[self.table["rank"] == str(rank), "count"]

        return int(hits.iloc[0]) if len(hits) else 0


def _run_rep(
    cfg  = None,
    spec = None,
    r    = None
    ):
    """One replication, failures are returned as records"""

    data_seed = utils._derive_seed(cfg.master_seed, r)
    boot_cfg  = replace(cfg.bootstrap, seed=utils._derive_seed(cfg.master_seed, r, 1))

    # concurrent replications each get a single bootstrap thread unless threads is set
    if cfg.workers > 1 and boot_cfg.threads is None:
        boot_cfg = replace(boot_cfg, threads=1)

    logger.info("Replication %d/%d", r + 1, cfg.reps)

    try:
        sim    = generate_model(spec, cfg.n, cfg.L, data_seed)
        report = sequential_rank_test(sim.sample, cfg.alpha, boot_cfg)
    except Exception as e:
        logger.warning("Replication %d failed: %s: %s", r + 1, type(e).__name__, e)
        return {"rep": r, "seed": data_seed, "r_hat": None, "rank": "failed", "status": "failed", "error": str(e)}

    label = str(report.r_hat) if report.r_hat is not None else f">={report.d + 1}"

    return {"rep": r, "seed": data_seed, "r_hat": report.r_hat, "rank": label, "status": "ok", "error": None}


def run_scenario(
    cfg = None
    ):
    """Empirical distribution of the estimated rank over cfg.reps simulated datasets

    Replication r simulates with a seed derived from (master_seed, r) and bootstraps with one derived from
    (master_seed, r, 1), so the table does not depend on the order or concurrency of the replications.

    Args:
        cfg (ScenarioConfig): scenario. Defaults to None.

    Returns:
        ScenarioResult: table with columns "rank" and "count" (ranks 1..d, ">=d+1" when every test rejected,
            "failed" for failed replications) and one record per replication
    """

    if cfg is None:
        raise DataError("Invalid or missing 'cfg' argument")

    spec = cfg.spec()
    d    = choose_d(cfg.L, override=cfg.bootstrap.d)

    logger.info("Scenario %s: n=%d, L=%d, reps=%d, B=%d", spec.name, cfg.n, cfg.L, cfg.reps, cfg.bootstrap.B)

    if cfg.workers == 1:
        rows = [_run_rep(cfg, spec, r) for r in range(cfg.reps)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            rows = list(ex.map(lambda r: _run_rep(cfg, spec, r), range(cfg.reps)))

    records = pd.DataFrame(rows, columns=["rep", "seed", "r_hat", "rank", "status", "error"]).sort_values("rep")
    records = records.reset_index(drop=True)
    records["r_hat"] = records["r_hat"].astype("Int64")

    labels = [str(q) for q in range(1, d + 1)] + [f">={d + 1}"]
    if (records["status"] == "failed").any():
        labels.append("failed")

    counts = records["rank"].value_counts()
    table  = pd.DataFrame({"rank": labels, "count": [int(counts.get(k, 0)) for k in labels]})

    return ScenarioResult(table, records, cfg)


def write_table(
    result = None,
    path   = None
    ):
    """Write the frequency table as CSV and the scenario with its records to <name>.meta.json

    Args:
        result (ScenarioResult): output of run_scenario. Defaults to None.
        path (str): CSV path. Defaults to None.

    Returns:
        str: path of the metadata sidecar
    """

    from covrankpy import __version__

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    result.table.to_csv(path, index=False)

    meta_path = os.path.splitext(path)[0] + ".meta.json"
    records   = result.records.astype(object).where(result.records.notna(), None)

    write_json({
        "tool_version": __version__,
        "scenario":     result.config.to_dict(),
        "records":      records.to_dict(orient="records"),
        }, meta_path)

    logger.info("Wrote rank table to %s and metadata to %s", path, meta_path)

    return meta_path


def load_scenario(
    path = None
    ):
    """ScenarioConfig from a JSON document"""

    if path is None:
        raise DataError("Invalid or missing 'path' argument")

    return ScenarioConfig.from_dict(read_json(path))
