import pytest

from gaga.config import ConfigError, RunConfig


def test_defaults_match_reference_settings():
    cfg = RunConfig()
    assert (cfg.learning_rate, cfg.weight_decay, cfg.batch_size, cfg.dropout) == (0.001, 0.0001, 512, 0.1)
    assert (cfg.n_hidden, cfg.n_layers, cfg.n_head, cfg.n_hops, cfg.alpha) == (32, 3, 4, 2, 1.0)
    assert (cfg.max_epoch, cfg.patience) == (500, 100)


def test_echo_round_trip():
    cfg = RunConfig(learning_rate=0.003, n_hidden=16, use_group_encoding=False, variant="gt", alpha=0.5)
    assert RunConfig.from_text(cfg.to_text()) == cfg


def test_parse_file_with_comments(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("# comment\nn_hidden = 16\n\nbatch_size=256  # trailing\nresidual=false\n")
    cfg = RunConfig.load(path)
    assert (cfg.n_hidden, cfg.batch_size, cfg.residual) == (16, 256, False)


def test_unknown_and_bad_keys():
    with pytest.raises(ConfigError, match="unknown key 'hidden'"):
        RunConfig.from_text("hidden=3")
    with pytest.raises(ConfigError, match=":2"):
        RunConfig.from_text("n_layers=2\nn_head=two")
    with pytest.raises(ConfigError, match="duplicate"):
        RunConfig.from_text("seed=1\nseed=2")
    with pytest.raises(ConfigError, match="variant"):
        RunConfig.from_text("variant=rnn")
    with pytest.raises(ConfigError):
        RunConfig.from_text("learning_rate=nan")
    with pytest.raises(ConfigError):
        RunConfig.from_text("no equals sign")


def test_cross_field_validation():
    with pytest.raises(ConfigError, match="divisible"):
        RunConfig(n_hidden=10, n_head=4)
    with pytest.raises(ConfigError):
        RunConfig(patience=600)
    with pytest.raises(ConfigError):
        RunConfig(label_frac=0.5, train_frac=0.4)
    with pytest.raises(ConfigError):
        RunConfig(train_frac=0.9, val_frac=0.2)


def test_overrides_and_views():
    cfg = RunConfig().with_overrides(["n_hops=3", "alpha=0.5", "variant=gt"])
    assert cfg.groupagg_config().num_hops == 3
    mc = cfg.model_config(input_dim=7, num_relations=2)
    assert (mc.input_dim, mc.num_hops, mc.variant, mc.seq_len) == (7, 3, "gt", 8)
    tc = cfg.train_config(seed=5)
    assert (tc.seed, tc.max_epochs, tc.patience) == (5, 500, 100)
