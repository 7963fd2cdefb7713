import pytest

from mgmd.config import PipelineConfig, config_from_text, config_to_text, load_config
from mgmd.exceptions import InvalidInputError, ParseError


def test_defaults_valid():
    cfg = PipelineConfig().validate()
    assert (cfg.k, cfg.diff_threshold, cfg.fusion, cfg.min_blob_area) == (1, 5, "three_frame_or", 15)
    assert (cfg.iou_gate, cfg.max_age, cfg.min_hits, cfg.lookback) == (0.3, 3, 1, 3)
    assert (cfg.grid_cols, cfg.grid_rows, cfg.lad_crop) == (30, 20, 320)


def test_text_round_trip():
    cfg = PipelineConfig(k=2, fusion="two_frame", tau_D=0.4, enable_lad=False, lk_method="numpy")
    assert config_from_text(config_to_text(cfg)) == cfg


def test_comments_blank_lines_and_booleans():
    cfg = config_from_text("# tuned\n\nk = 3   # stride\nenable_tf = off\n  lad_conf=0.6  \n"
                           "lac_command = run#1 --x\n")
    assert cfg.k == 3 and cfg.enable_tf is False and cfg.lad_conf == 0.6
    assert cfg.lac_command == "run#1 --x"


@pytest.mark.parametrize("text, lineno", [
    ("k = 1\nbogus = 2\n", 2),
    ("k = one\n", 1),
    ("enable_tf = maybe\n", 1),
    ("\n\njust words\n", 3),
])
def test_parse_errors_carry_line(text, lineno):
    with pytest.raises(ParseError) as err:
        config_from_text(text, "cfg.txt")
    assert err.value.lineno == lineno and f"cfg.txt:{lineno}" in str(err.value)


@pytest.mark.parametrize("text", ["k = 0", "fusion = xor", "lk_window = 20", "iou_gate = 1.5",
                                  "lac_backend = linear", "history_size = 2"])
def test_range_errors(text):
    with pytest.raises(ParseError):
        config_from_text(text)
    key, _, value = text.partition(" = ")
    typ = type(getattr(PipelineConfig(), key))
    with pytest.raises(InvalidInputError):
        PipelineConfig(**{key: typ(value)}).validate()


def test_load_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("seed = 9\n")
    assert load_config(p).seed == 9
    with pytest.raises(ParseError):
        load_config(tmp_path / "absent.cfg")
