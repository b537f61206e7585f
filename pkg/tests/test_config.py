import os
import shutil
import tempfile

import pytest
import yaml

from src.config import ConfigManager


@pytest.fixture
def config_dir():
    path = tempfile.mkdtemp()
    yield path
    shutil.rmtree(path, ignore_errors=True)


def test_missing_file_writes_defaults(config_dir):
    """Test a missing settings file is created with the defaults"""
    path = os.path.join(config_dir, 'config.yaml')
    config = ConfigManager(path).load_config()
    assert os.path.exists(path)
    assert config.simulation.oversample == 4
    assert config.performance.max_threads == 2

    with open(path, encoding='utf-8') as file:
        saved = yaml.safe_load(file)
    assert saved['imaging']['pixel_pitch_mm'] == 5.0


def test_partial_file_keeps_other_defaults(config_dir):
    path = os.path.join(config_dir, 'config.yaml')
    with open(path, 'w', encoding='utf-8') as file:
        yaml.safe_dump({'simulation': {'interpolation': 'linear'}}, file)
    config = ConfigManager(path).load_config()
    assert config.simulation.interpolation == 'linear'
    assert config.simulation.sinc_taps == 8
    assert config.output.write_pgm is True


@pytest.mark.parametrize("section,values", [
    ('simulation', {'oversample': 1}),
    ('simulation', {'interpolation': 'cubic'}),
    ('simulation', {'footprint_mode': 'exact'}),
    ('performance', {'max_threads': 0}),
])
def test_invalid_settings_rejected(config_dir, section, values):
    """Test settings outside their allowed values are rejected"""
    path = os.path.join(config_dir, 'config.yaml')
    with open(path, 'w', encoding='utf-8') as file:
        yaml.safe_dump({section: values}, file)
    with pytest.raises(ValueError):
        ConfigManager(path).load_config()
