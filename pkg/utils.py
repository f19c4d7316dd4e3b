import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, TypeVar, Union

import yaml
from rich.logging import RichHandler
from tqdm import tqdm

T = TypeVar("T")
R = TypeVar("R")

FILE_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Union[str, int] = "INFO", log_file: Optional[Union[str, Path]] = None) -> logging.Logger:
    """Rich console logging on the root logger, plus an optional plain log file"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(level.upper() if isinstance(level, str) else level)

    console = RichHandler(rich_tracebacks=True, show_path=False, markup=False)
    console.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    root.addHandler(console)

    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(FILE_LOG_FORMAT))
        root.addHandler(file_handler)
    return root


def load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a YAML mapping; a missing or empty file gives an empty dict"""
    path = Path(path)
    if not path.exists():
        return {}
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path} must contain a mapping at the top level")
    return data


def dump_yaml(data: Dict[str, Any], path: Union[str, Path]):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=False)


def stable_fingerprint(data: Any) -> str:
    """SHA-256 of the canonical JSON dump"""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_digest(path: Union[str, Path], chunk_size: int = 1 << 20) -> str:
    """SHA-256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_parallel(fn: Callable[[T], R], items: Iterable[T], max_workers: int = 1,
                 desc: str = "runs", progress: bool = True) -> List[Tuple[T, R]]:
    """Apply `fn` to every item on a thread pool; results come back in input order"""
    items = list(items)
    results: Dict[int, R] = {}
    bar = tqdm(total=len(items), desc=desc, disable=not progress)
    if max_workers <= 1:
        for index, item in enumerate(items):
            results[index] = fn(item)
            bar.update(1)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            future_to_index = {executor.submit(fn, item): index for index, item in enumerate(items)}

            for future in as_completed(future_to_index):
                results[future_to_index[future]] = future.result()
                bar.update(1)
    bar.close()
    return [(item, results[index]) for index, item in enumerate(items)]
