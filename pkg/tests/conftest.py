"""
Pytest configuration and fixtures for softmine tests
"""
import pytest

from app.engine.model import init_params
from app.engine.numerics import make_rng
from app.schemas.config import BatchSpec, ModelDims, OptimizerConfig, SynthConfig, TrainConfig
from app.services import dataset_service


@pytest.fixture
def rng():
    """Seeded random stream for a single test"""
    return make_rng(1234, "tests")


@pytest.fixture
def toy_config() -> SynthConfig:
    """Six small classes with a quarter of the labels corrupted"""
    return SynthConfig(n_classes=6, per_class=12, dim=5, outlier_rate=0.25, seed=7)


@pytest.fixture
def toy_dataset(toy_config):
    return dataset_service.generate(toy_config)


@pytest.fixture
def toy_split(toy_dataset):
    """(train, test) with three classes each"""
    return dataset_service.split(toy_dataset, 0.5, make_rng(0, "split"))


@pytest.fixture
def dataset_file(tmp_path, toy_dataset):
    path = tmp_path / "dataset.txt"
    dataset_service.save(toy_dataset, path)
    return path


@pytest.fixture
def small_dims() -> ModelDims:
    return ModelDims(d_in=6, hidden=10, embed_dim=8, n_classes=4)


@pytest.fixture
def small_params(small_dims):
    return init_params(small_dims, make_rng(0, "init"))


@pytest.fixture
def toy_train_config(tmp_path) -> TrainConfig:
    """Two quick epochs on the toy split"""
    return TrainConfig(
        epochs=2,
        batch=BatchSpec(c=2, k=3),
        hidden=32,
        embed_dim=4,
        eval_every=1,
        ks=[1, 2, 4],
        optimizer=OptimizerConfig(lr=0.05, momentum=0.9),
        dump_dir=str(tmp_path / "dumps"),
    )
