import numpy as np
import pytest

from fairexperts.config import (
    ConfigError,
    CsvSource,
    config_from_dict,
    load_config,
    parse_kv_text,
)
from fairexperts.data import SyntheticConfig

MINIMAL = """
version = 1
seeds = 11, 12
metric = accuracy
strategies = greedy, ip
lambda_sel = 0.1

data.kind = synthetic
data.seed = 7
data.d = 2
data.classes = 2
data.groups = 2
data.mean.g0.c0 = -1, 0
data.mean.g0.c1 = 1, 0
data.mean.g1.c0 = -1, 2
data.mean.g1.c1 = 1, 2
data.std.g0.c0 = 0.5
data.std.g0.c1 = 0.5
data.std.g1.c0 = 0.5
data.std.g1.c1 = 0.5
data.count.train.g0 = 20
data.count.train.g1 = 20
data.count.val.g0 = 10
data.count.val.g1 = 10
data.count.test.g0 = 10
data.count.test.g1 = 10

hyper.epochs = 2
hyper.batch_size = 8
"""


def test_parse_kv_text_basics():
    kv = parse_kv_text("# comment\na = 1\n\nb.c = x, y\n")
    assert kv == {"a": "1", "b.c": "x, y"}


def test_parse_kv_text_rejects_duplicates_and_garbage():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_kv_text("a = 1\na = 2\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_kv_text("just some text\n")


def test_minimal_synthetic_config_parses():
    config = config_from_dict(parse_kv_text(MINIMAL))
    assert config.seeds == (11, 12)
    assert config.metric == "accuracy"
    assert config.strategies == ("greedy", "ip")
    assert isinstance(config.data, SyntheticConfig)
    assert config.data.means.shape == (2, 2, 2)
    assert config.hyper.epochs == 2
    assert config.hyper.lambda_disc == 0.05  # default preserved
    assert config.raw["data.seed"] == "7"


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        config_from_dict(parse_kv_text(MINIMAL + "\nhyper.turbo = 9\n"))


def test_config_rejects_bad_version():
    text = MINIMAL.replace("version = 1", "version = 2")
    with pytest.raises(ConfigError, match="version"):
        config_from_dict(parse_kv_text(text))


def test_config_requires_mean_vector_length():
    text = MINIMAL.replace("data.mean.g0.c0 = -1, 0", "data.mean.g0.c0 = -1")
    with pytest.raises(ConfigError, match="expected 2 values"):
        config_from_dict(parse_kv_text(text))


def test_config_rejects_unknown_metric_and_strategy():
    with pytest.raises(ConfigError, match="metric"):
        config_from_dict(parse_kv_text(MINIMAL.replace("metric = accuracy", "metric = f1")))
    with pytest.raises(ConfigError, match="strategy"):
        config_from_dict(
            parse_kv_text(MINIMAL.replace("strategies = greedy, ip", "strategies = random"))
        )


def test_config_rejects_invalid_hyperparameters():
    with pytest.raises(ConfigError, match="hyper"):
        config_from_dict(parse_kv_text(MINIMAL + "\nhyper.lr0 = -1\n"))


def test_csv_source_config():
    text = """
version = 1
seeds = 3
data.kind = csv
data.path = somewhere.csv
data.d = 4
data.classes = 2
data.groups = 3
data.split_column = none
data.split_seed = 9
"""
    config = config_from_dict(parse_kv_text(text))
    assert isinstance(config.data, CsvSource)
    assert config.data.schema.feature_columns == ("f0", "f1", "f2", "f3")
    assert config.data.schema.split_column is None
    assert config.data.schema.split_seed == 9
    assert config.strategies == ("greedy", "ip")
    assert config.lambda_sel == 0.1


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="does not exist"):
        load_config("/nonexistent/config.cfg")


def test_repo_reference_config_parses():
    config = load_config("configs/group_shift.cfg")
    assert config.seeds == (11, 12, 13)
    assert isinstance(config.data, SyntheticConfig)
    assert config.data.counts["train"] == (3200, 800)
    assert np.all(config.data.stds > 0)
    assert config.hyper.epochs == 30


def test_csv_source_with_custom_feature_list():
    text = """
version = 1
seeds = 3
data.kind = csv
data.path = somewhere.csv
data.classes = 2
data.groups = 2
data.features = age, income, height
data.label_column = target
data.group_column = cohort
"""
    config = config_from_dict(parse_kv_text(text))
    assert config.data.schema.feature_columns == ("age", "income", "height")
    assert config.data.schema.label_column == "target"
    assert config.data.schema.group_column == "cohort"
