"""Live-socket integration: the selection engine's own client drives a real
uvicorn process serving the fixture checkpoint."""

import socket
import subprocess
import sys
import time

import numpy as np
import pytest

requests = pytest.importorskip("requests")
kpp = pytest.importorskip("kpp")

from kpp.oracle import PatchSet, full_mse, masked_mse
from kpp.oracle_client import RemoteOracle, RemoteOracleClient
from kpp.patch_grid import GridSpec, split
from kpp.selector import Budget, InitPolicy, kpp_greedy


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def live_server(request):
    checkpoint = request.getfixturevalue("tiny_checkpoint")
    port = _free_port()
    proc = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "mae_oracle_server.cli",
            "--checkpoint",
            checkpoint,
            "--port",
            str(port),
            "--deterministic",
        ],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    try:
        for _ in range(120):
            try:
                if requests.get(url + "/v1/health", timeout=1).status_code == 200:
                    break
            except requests.ConnectionError:
                time.sleep(0.25)
        else:
            raise RuntimeError("server did not come up")
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


@pytest.fixture(scope="module")
def remote_oracle(live_server):
    return RemoteOracle(RemoteOracleClient(live_server, timeout=30), GridSpec(224, 16))


def test_health_geometry_via_primary_client(live_server):
    info = RemoteOracleClient(live_server).health()
    assert info["patch_size"] == 16
    assert info["image_side"] == 224


def test_remote_losses_match_in_process_engine(remote_oracle, engine):
    img = np.random.default_rng(5).uniform(0, 1, (224, 224, 3)).astype(np.float32)
    patches = split(img.astype(np.float64), GridSpec(224, 16))
    visible = list(range(0, 196, 11))
    subset = PatchSet.from_indices(196, visible)
    recon = remote_oracle.reconstruct(patches, subset)
    got_masked = masked_mse(recon, patches, subset)
    got_full = full_mse(recon, patches)
    want = engine.compute_losses(img, visible)
    assert got_masked == pytest.approx(want.masked_mse, rel=1e-9)
    assert got_full == pytest.approx(want.full_mse, rel=1e-9)
    for p in visible:
        assert recon.per_patch_sq_err[p] == 0.0


def test_greedy_seed_step_over_the_wire(remote_oracle):
    img = np.random.default_rng(6).uniform(0, 1, (224, 224, 3)).astype(np.float32)
    patches = split(img.astype(np.float64), GridSpec(224, 16))
    trace = kpp_greedy(remote_oracle, patches, Budget(0.006, 1), InitPolicy.central())
    assert trace.chosen_sequence == (105,)
    assert trace.losses[0] > 0.0


def test_repeated_requests_identical_over_the_wire(remote_oracle):
    img = np.random.default_rng(7).uniform(0, 1, (224, 224, 3)).astype(np.float32)
    patches = split(img.astype(np.float64), GridSpec(224, 16))
    subset = PatchSet.from_indices(196, range(0, 196, 13))
    a = remote_oracle.reconstruct(patches, subset)
    b = remote_oracle.reconstruct(patches, subset)
    assert np.array_equal(a.per_patch_sq_err, b.per_patch_sq_err)
