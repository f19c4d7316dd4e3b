"""
Hourly kline client for Binance-compatible REST endpoints, with a per-symbol
CSV cache.

Only the quote-asset volume (the hourly traded notional) is kept. The cache
holds one `<SYMBOL>.csv` per symbol (`timestamp,value`, epoch seconds) and is
extended append-only: rows already cached are never rewritten.
"""

import logging
import threading
import time
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import requests
from requests.adapters import HTTPAdapter
from tqdm import tqdm
from urllib3.util.retry import Retry

from data import SECONDS_PER_HOUR, IngestReport, SeriesFrame, count_missing_hours, merge_columns
from errors import FetchError

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://api.binance.com/api/v3/klines"
DEFAULT_QUOTE = "USDT"
DEFAULT_ASSETS = (
    "BTC", "ETH", "ADA", "XMR", "EOS", "MATIC", "TRX", "FTM", "BNB", "XLM",
    "ENJ", "CHZ", "BUSD", "ATOM", "LINK", "ETC", "XRP", "BCH", "LTC",
)
PAGE_LIMIT = 1000
QUOTE_VOLUME_FIELD = 7
MS_PER_HOUR = SECONDS_PER_HOUR * 1000

DateLike = Union[str, int, pd.Timestamp]


def default_symbols(quote: str = DEFAULT_QUOTE) -> Tuple[str, ...]:
    return tuple(f"{asset}{quote}" for asset in DEFAULT_ASSETS)


def to_epoch_hour(value: DateLike) -> int:
    """Dates/timestamps (UTC) to epoch hours; plain integers are taken as epoch hours already"""
    if isinstance(value, (int, np.integer)):
        return int(value)
    stamp = pd.Timestamp(value)
    stamp = stamp.tz_localize("UTC") if stamp.tzinfo is None else stamp.tz_convert("UTC")
    return int(stamp.timestamp()) // SECONDS_PER_HOUR


def make_session(retries: int = 5, backoff: float = 0.5) -> requests.Session:
    retry = Retry(
        total=retries,
        backoff_factor=backoff,
        status_forcelist=(418, 429, 500, 502, 503, 504),
        allowed_methods=frozenset({"GET"}),
        raise_on_status=False,
    )
    session = requests.Session()
    session.mount("https://", HTTPAdapter(max_retries=retry))
    session.mount("http://", HTTPAdapter(max_retries=retry))
    return session


class RateLimiter:
    """Serializes requests with a minimum interval between them"""

    def __init__(self, min_interval: float = 0.25):
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._last = 0.0

    def wait(self):
        with self._lock:
            delay = self._last + self.min_interval - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            self._last = time.monotonic()


class KlinesClient:
    def __init__(self, endpoint: str = DEFAULT_ENDPOINT, cache_dir: Optional[Union[str, Path]] = None,
                 session: Optional[requests.Session] = None, min_interval: float = 0.25, timeout: float = 10.0):
        self.endpoint = endpoint
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.session = session or make_session()
        self.limiter = RateLimiter(min_interval)
        self.timeout = timeout
        self.requests_made = 0

    # ------------------------------------------------------------ cache

    def cache_path(self, symbol: str) -> Optional[Path]:
        return self.cache_dir / f"{symbol}.csv" if self.cache_dir is not None else None

    def read_cache(self, symbol: str) -> pd.Series:
        path = self.cache_path(symbol)
        if path is None or not path.exists():
            return pd.Series(dtype=np.float64, name=symbol)
        df = pd.read_csv(path)
        return pd.Series(
            df["value"].to_numpy(dtype=np.float64),
            index=df["timestamp"].to_numpy(dtype=np.int64) // SECONDS_PER_HOUR,
            name=symbol,
        )

    def write_cache(self, symbol: str, cached: pd.Series, fetched: pd.Series) -> pd.Series:
        merged = cached.combine_first(fetched) if len(cached) else fetched
        merged = merged.sort_index()
        path = self.cache_path(symbol)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            pd.DataFrame({
                "timestamp": merged.index.to_numpy(dtype=np.int64) * SECONDS_PER_HOUR,
                "value": merged.to_numpy(),
            }).to_csv(path, index=False, float_format="%.17g")
        return merged

    # ------------------------------------------------------------ network

    def _get(self, params: Dict) -> list:
        self.limiter.wait()
        self.requests_made += 1
        try:
            response = self.session.get(self.endpoint, params=params, timeout=self.timeout)
            response.raise_for_status()
            return response.json()
        except (requests.RequestException, ValueError) as e:
            raise FetchError(f"kline request for {params.get('symbol')} failed: {e}") from e

    def fetch_range(self, symbol: str, start_hour: int, end_hour: int) -> pd.Series:
        """Quote volumes for open times in [start_hour, end_hour), paging forward"""
        hours, volumes = [], []
        cursor = start_hour
        while cursor < end_hour:
            rows = self._get({
                "symbol": symbol,
                "interval": "1h",
                "startTime": cursor * MS_PER_HOUR,
                "endTime": end_hour * MS_PER_HOUR - 1,
                "limit": PAGE_LIMIT,
            })
            if not rows:
                break
            for row in rows:
                hour = int(row[0]) // MS_PER_HOUR
                if start_hour <= hour < end_hour:
                    hours.append(hour)
                    volumes.append(float(row[QUOTE_VOLUME_FIELD]))
            last = int(rows[-1][0]) // MS_PER_HOUR
            if last < cursor:
                break
            cursor = last + 1
        series = pd.Series(volumes, index=np.asarray(hours, dtype=np.int64), dtype=np.float64, name=symbol)
        return series[~series.index.duplicated(keep="first")].sort_index()

    def fetch_hourly_klines(self, symbol: str, start: DateLike, end: DateLike) -> pd.Series:
        """Hourly quote notional for [start, end), served from the cache where it already covers the range"""
        start_hour, end_hour = to_epoch_hour(start), to_epoch_hour(end)
        if start_hour >= end_hour:
            return pd.Series(dtype=np.float64, name=symbol)

        cached = self.read_cache(symbol)
        if len(cached) and cached.index.min() <= start_hour:
            fetch_from = max(start_hour, int(cached.index.max()) + 1)
        else:
            fetch_from = start_hour
        if fetch_from < end_hour:
            logger.debug("Fetching %s hours %d..%d", symbol, fetch_from, end_hour)
            cached = self.write_cache(symbol, cached, self.fetch_range(symbol, fetch_from, end_hour))
        else:
            logger.debug("%s served from cache", symbol)

        series = cached[(cached.index >= start_hour) & (cached.index < end_hour)]
        gaps = count_missing_hours(series.index.to_numpy()) + (
            int(series.index.min()) - start_hour if len(series) else 0
        )
        if gaps:
            logger.warning("%s: %d missing hours in the requested range", symbol, gaps)
        return series


def fetch_hourly_klines(symbol: str, start: DateLike, end: DateLike, endpoint: str = DEFAULT_ENDPOINT,
                        cache_dir: Optional[Union[str, Path]] = None) -> pd.Series:
    return KlinesClient(endpoint, cache_dir).fetch_hourly_klines(symbol, start, end)


def fetch_frame(symbols: Sequence[str], start: DateLike, end: DateLike, target: str,
                client: Optional[KlinesClient] = None, progress: bool = True) -> Tuple[SeriesFrame, IngestReport]:
    """Fetch every symbol and merge them on their common hours"""
    client = client or KlinesClient()
    series: Dict[str, pd.Series] = {}
    for symbol in tqdm(symbols, desc="symbols", disable=not progress):
        series[symbol] = client.fetch_hourly_klines(symbol, start, end)
    frame, report = merge_columns(series, target)
    logger.info("Fetched %d symbols with %d network requests", len(symbols), client.requests_made)
    return frame, report


def symbols_with_target(symbols: Iterable[str], target: str) -> Tuple[str, ...]:
    """Symbol list with the target first"""
    rest = [s for s in symbols if s != target]
    return (target, *rest)
