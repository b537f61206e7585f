import yaml
import os
from typing import Dict, Any, Optional
from dataclasses import dataclass, asdict
import logging

@dataclass
class SimulationConfig:
    oversample: int = 4
    guard_cells: float = 4.0
    interpolation: str = "sinc"  # sinc | linear
    sinc_taps: int = 8
    narrowband_factor: float = 10.0
    footprint_mode: str = "auto"  # auto | closed_form | cone
    taper: str = "uniform"  # uniform | raised_cosine

@dataclass
class ImagingConfig:
    pixel_pitch_mm: float = 5.0
    islr_mainlobe_scale: float = 2.0
    sidelobe_threshold_db: float = -10.0
    local_max_size: int = 3

@dataclass
class TomographyConfig:
    frequency_samples: int = 64
    k_bin_rad_per_m: float = 0.5
    occupancy_bins: int = 64

@dataclass
class PerformanceConfig:
    max_memory_mb: int = 2048
    max_threads: int = 2
    pixel_chunk: int = 4096

@dataclass
class OutputConfig:
    write_csv: bool = True
    write_pgm: bool = True
    pgm_dynamic_range_db: float = 40.0

@dataclass
class LoggingConfig:
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: Optional[str] = None

@dataclass
class Config:
    simulation: SimulationConfig
    imaging: ImagingConfig
    tomography: TomographyConfig
    performance: PerformanceConfig
    output: OutputConfig
    logging: LoggingConfig

class ConfigManager:
    def __init__(self, config_path: str = "config.yaml"):
        self.config_path = config_path
        self._config: Optional[Config] = None

    def load_config(self) -> Config:
        """Load configuration from YAML file"""
        if self._config is None:
            if os.path.exists(self.config_path):
                with open(self.config_path, 'r', encoding='utf-8') as file:
                    config_data = yaml.safe_load(file) or {}
                self._config = self._create_config_from_dict(config_data)
            else:
                # Create default config if file doesn't exist
                self._config = self._create_default_config()
                self.save_config()

        return self._config

    def save_config(self):
        """Save current configuration to YAML file"""
        if self._config:
            config_dict = self._config_to_dict(self._config)
            with open(self.config_path, 'w', encoding='utf-8') as file:
                yaml.dump(config_dict, file, default_flow_style=False, allow_unicode=True)

    def _create_config_from_dict(self, config_data: Dict[str, Any]) -> Config:
        """Create Config object from dictionary"""
        simulation_config = SimulationConfig(**config_data.get('simulation', {}))
        imaging_config = ImagingConfig(**config_data.get('imaging', {}))
        tomography_config = TomographyConfig(**config_data.get('tomography', {}))
        performance_config = PerformanceConfig(**config_data.get('performance', {}))
        output_config = OutputConfig(**config_data.get('output', {}))
        logging_config = LoggingConfig(**config_data.get('logging', {}))

        if simulation_config.oversample < 2:
            raise ValueError("simulation.oversample must be >= 2")
        if simulation_config.interpolation not in ("sinc", "linear"):
            raise ValueError(f"Unknown interpolation: {simulation_config.interpolation}")
        if simulation_config.footprint_mode not in ("auto", "closed_form", "cone"):
            raise ValueError(f"Unknown footprint mode: {simulation_config.footprint_mode}")
        if performance_config.max_threads < 1 or performance_config.pixel_chunk < 1:
            raise ValueError("performance.max_threads and pixel_chunk must be positive")

        return Config(
            simulation=simulation_config,
            imaging=imaging_config,
            tomography=tomography_config,
            performance=performance_config,
            output=output_config,
            logging=logging_config
        )

    def _create_default_config(self) -> Config:
        """Create default configuration"""
        return Config(
            simulation=SimulationConfig(),
            imaging=ImagingConfig(),
            tomography=TomographyConfig(),
            performance=PerformanceConfig(),
            output=OutputConfig(),
            logging=LoggingConfig()
        )

    def _config_to_dict(self, config: Config) -> Dict[str, Any]:
        """Convert Config object to dictionary"""
        return {
            'simulation': asdict(config.simulation),
            'imaging': asdict(config.imaging),
            'tomography': asdict(config.tomography),
            'performance': asdict(config.performance),
            'output': asdict(config.output),
            'logging': asdict(config.logging)
        }

# Global config manager instance; NLOS_CONFIG points at another settings file
config_manager = ConfigManager(os.environ.get("NLOS_CONFIG", "config.yaml"))

def get_config() -> Config:
    """Get global configuration instance"""
    return config_manager.load_config()

def setup_logging(level: Optional[str] = None):
    """Setup logging based on configuration"""
    config = get_config()

    # Configure logging
    log_config = {
        'level': getattr(logging, (level or config.logging.level).upper()),
        'format': config.logging.format
    }

    if config.logging.file:
        log_config['filename'] = config.logging.file

    logging.basicConfig(**log_config)

    # Set specific loggers
    logging.getLogger('concurrent.futures').setLevel(logging.WARNING)
