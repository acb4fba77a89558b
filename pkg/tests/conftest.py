import pathlib

import pytest

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "data" / "cvrplib"


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def a32(data_dir):
    from mllm_cvrp import tsplib

    return tsplib.parse_instance((data_dir / "A-n32-k5.vrp").read_text())


@pytest.fixture(scope="session")
def a32_sol(data_dir):
    from mllm_cvrp import tsplib

    return tsplib.parse_solution((data_dir / "A-n32-k5.sol").read_text())
