from functools import lru_cache

from app.core.config import settings
from app.schemas.device import ReferenceParamLibrary
from app.services.bench_service import BenchConfig, read_bench_config
from app.services.reference_library import load_reference_library


@lru_cache(maxsize=1)
def _library() -> ReferenceParamLibrary:
    return load_reference_library(settings.reference_library_dir)


@lru_cache(maxsize=1)
def _bench_config() -> BenchConfig:
    return read_bench_config(settings.bench_config_path)


def get_library() -> ReferenceParamLibrary:
    return _library()


def get_bench_config() -> BenchConfig:
    return _bench_config()


def reset_caches():
    _library.cache_clear()
    _bench_config.cache_clear()
