"""Shared fixtures.

The desk-scale training run takes a few minutes, so it is executed once per
session and cached on disk keyed by the exact training config.  Training is
deterministic for a fixed seed, so the cache only skips recomputation; set
LEOBEAM_TEST_NO_CACHE=1 to force a fresh run.
"""

import hashlib
import json
import os
import time
from typing import NamedTuple

import numpy as np
import pytest

from leobeam import beamform, channel, experiments, train

CACHE_DIR = os.path.join(os.path.dirname(__file__), "_cache")
_REPO_ROOT = os.path.join(os.path.dirname(__file__), os.pardir)


def desk_config() -> experiments.ExperimentConfig:
    return experiments.load_config(
        os.path.join(_REPO_ROOT, "configs", "desk.ini"))


class DeskTraining(NamedTuple):
    result: train.TrainResult
    seconds: float  # wall-clock upper bound for the run that built the cache


@pytest.fixture(scope="session")
def desk_training() -> DeskTraining:
    """200-epoch desk-scale training result (no early stop)."""
    cfg = desk_config()
    tc = cfg.train_config()
    assert tc.epochs == 200 and not tc.early_stop and tc.test_size == 2000
    key = hashlib.sha256(repr(tc).encode()).hexdigest()[:16]
    ckpt_path = os.path.join(CACHE_DIR, f"desk_{key}.ckpt")
    meta_path = os.path.join(CACHE_DIR, f"desk_{key}.json")
    if (os.path.exists(ckpt_path) and os.path.exists(meta_path)
            and not os.environ.get("LEOBEAM_TEST_NO_CACHE")):
        ckpt = train.load_checkpoint(ckpt_path)
        meta = json.load(open(meta_path))
        result = train.TrainResult(
            params=ckpt.params,
            history=[train.EpochStats(*row) for row in meta["history"]],
            best_epoch=meta["best_epoch"],
            best_test_wsr=meta["best_test_wsr"],
            stopped_early=meta["stopped_early"],
            input_scale=ckpt.input_scale)
        return DeskTraining(result, float(meta["seconds"]))
    t0 = time.monotonic()
    result = train.train(tc)
    seconds = time.monotonic() - t0
    os.makedirs(CACHE_DIR, exist_ok=True)
    train.save_checkpoint(ckpt_path, result.params,
                          step=len(result.history) * 50,
                          input_scale=result.input_scale)
    json.dump({"history": [list(st) for st in result.history],
               "best_epoch": result.best_epoch,
               "best_test_wsr": result.best_test_wsr,
               "stopped_early": result.stopped_early,
               "seconds": seconds},
              open(meta_path, "w"))
    return DeskTraining(result, seconds)


@pytest.fixture(scope="session")
def desk_eval(desk_training):
    """Mean WSR of the trained network and the classical baselines.

    Evaluated on the trainer's own held-out test ensemble (2000 samples),
    reconstructed from the seed split so no state leaks from the fixture.
    """
    cfg = desk_config()
    tc = cfg.train_config()
    sysp = tc.system
    _, _, s_test = np.random.SeedSequence(tc.seed).spawn(3)
    rng = np.random.Generator(np.random.Philox(s_test))
    h_test = channel.sample_channel_batch(
        tc.chan, tc.test_size, sysp.k_sats, sysp.m_users, sysp.n_antennas,
        rng)
    wt = sysp.weight_vector()

    def mean_wsr_of(maker):
        total = 0.0
        for b in range(h_test.shape[0]):
            w = maker(h_test[b])
            total += beamform.wsr(h_test[b], w, sysp.sigma2,
                                  bandwidth=sysp.bandwidth,
                                  weights=wt).weighted_sum
        return total / h_test.shape[0]

    p, s2 = sysp.power, sysp.sigma2
    means = {
        "mrt_local": mean_wsr_of(lambda h: beamform.mrt_local(h, p).w),
        "zf_local": mean_wsr_of(lambda h: beamform.zf_local(h, p).w),
        "mmse_local": mean_wsr_of(
            lambda h: beamform.mmse_local(h, p, s2).w),
        "zf_global": mean_wsr_of(
            lambda h: beamform.zf_global(h, sysp.k_sats * p).w),
        "mmse_global": mean_wsr_of(
            lambda h: beamform.mmse_global(h, sysp.k_sats * p, s2).w),
    }
    sys_scaled = train.SystemParams(
        sysp.k_sats, sysp.m_users, sysp.n_antennas, power=p, sigma2=s2,
        bandwidth=sysp.bandwidth, weights=sysp.weights,
        input_scale=desk_training.result.input_scale)
    w_gnn = train.infer_batch(desk_training.result.params, h_test,
                              sys_scaled)
    means["gnn_local"] = float(np.mean([
        beamform.wsr(h_test[b], w_gnn[b], s2, bandwidth=sysp.bandwidth,
                     weights=wt).weighted_sum
        for b in range(h_test.shape[0])]))
    return {"means": means, "h_test": h_test, "system": sysp,
            "input_scale": desk_training.result.input_scale}
