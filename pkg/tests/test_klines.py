import json
from urllib.parse import parse_qs, urlparse

import numpy as np
import pytest
import responses

from errors import FetchError
from klines import (
    MS_PER_HOUR,
    PAGE_LIMIT,
    KlinesClient,
    default_symbols,
    fetch_frame,
    make_session,
    symbols_with_target,
    to_epoch_hour,
)

ENDPOINT = "https://api.example.test/api/v3/klines"


def kline(hour, quote_volume):
    open_ms = hour * MS_PER_HOUR
    return [open_ms, "1.0", "1.1", "0.9", "1.05", "12.5", open_ms + MS_PER_HOUR - 1, f"{quote_volume}", 42,
            "6.0", "6.1", "0"]


class FakeExchange:
    """Serves klines for a fixed set of hours, honouring startTime/endTime/limit"""

    def __init__(self, hours_by_symbol):
        self.hours_by_symbol = hours_by_symbol
        self.queries = []

    @staticmethod
    def volume(symbol, hour):
        return 1000.0 + hour + (0.5 if symbol.startswith("ETH") else 0.0)

    def __call__(self, request):
        query = {k: v[0] for k, v in parse_qs(urlparse(request.url).query).items()}
        self.queries.append(query)
        symbol = query["symbol"]
        start, end = int(query["startTime"]), int(query["endTime"])
        limit = int(query["limit"])
        rows = [kline(h, self.volume(symbol, h)) for h in sorted(self.hours_by_symbol[symbol])
                if start <= h * MS_PER_HOUR <= end][:limit]
        return 200, {"Content-Type": "application/json"}, json.dumps(rows)


@pytest.fixture
def client(tmp_path):
    return KlinesClient(ENDPOINT, cache_dir=tmp_path / "klines", session=make_session(retries=0), min_interval=0.0)


@pytest.fixture
def exchange():
    fake = FakeExchange({"BTCUSDT": set(range(100, 3000)), "ETHUSDT": set(range(100, 3000)) - {205}})
    with responses.RequestsMock(assert_all_requests_are_fired=False) as mock:
        mock.add_callback(responses.GET, ENDPOINT, callback=fake)
        yield fake


class TestFetch:
    def test_quote_volume_is_kept(self, client, exchange):
        series = client.fetch_hourly_klines("BTCUSDT", 100, 110)
        assert series.index.tolist() == list(range(100, 110))
        assert series.loc[104] == 1104.0
        assert client.requests_made == 1

    def test_pages_through_long_ranges(self, client, exchange):
        series = client.fetch_hourly_klines("BTCUSDT", 100, 100 + PAGE_LIMIT + 500)
        assert len(series) == PAGE_LIMIT + 500
        assert client.requests_made == 2
        assert int(exchange.queries[1]["startTime"]) == (100 + PAGE_LIMIT) * MS_PER_HOUR

    def test_cache_serves_repeated_requests(self, tmp_path, client, exchange):
        first = client.fetch_hourly_klines("BTCUSDT", 100, 150)
        again = KlinesClient(ENDPOINT, cache_dir=tmp_path / "klines", min_interval=0.0)
        second = again.fetch_hourly_klines("BTCUSDT", 100, 150)
        assert again.requests_made == 0
        assert len(exchange.queries) == 1
        np.testing.assert_array_equal(second.to_numpy(), first.to_numpy())

    def test_cache_is_extended_not_refetched(self, client, exchange):
        client.fetch_hourly_klines("BTCUSDT", 100, 150)
        series = client.fetch_hourly_klines("BTCUSDT", 120, 180)
        assert int(exchange.queries[-1]["startTime"]) == 150 * MS_PER_HOUR
        assert series.index.tolist() == list(range(120, 180))
        cached = client.read_cache("BTCUSDT")
        assert cached.index.tolist() == list(range(100, 180))

    def test_empty_range(self, client, exchange):
        series = client.fetch_hourly_klines("BTCUSDT", "2021-01-01", "2021-01-01")
        assert series.empty
        assert exchange.queries == []

    def test_missing_hour_is_dropped_on_merge(self, client, exchange):
        frame, report = fetch_frame(["BTCUSDT", "ETHUSDT"], 200, 210, "BTCUSDT", client=client, progress=False)
        assert len(frame) == 9
        assert 205 not in frame.timestamps
        assert report.rows_dropped == 1
        assert frame.columns == ("BTCUSDT", "ETHUSDT")

    @responses.activate
    def test_server_error_raises_fetch_error(self, client):
        responses.add(responses.GET, ENDPOINT, status=500)
        with pytest.raises(FetchError):
            client.fetch_hourly_klines("BTCUSDT", 100, 110)

    @responses.activate
    def test_malformed_body_raises_fetch_error(self, client):
        responses.add(responses.GET, ENDPOINT, body="not json", status=200)
        with pytest.raises(FetchError):
            client.fetch_hourly_klines("BTCUSDT", 100, 110)


class TestHelpers:
    def test_epoch_hours(self):
        assert to_epoch_hour("1970-01-01 05:00") == 5
        assert to_epoch_hour(12) == 12
        assert to_epoch_hour("2020-01-01") == 438288

    def test_default_symbols(self):
        symbols = default_symbols()
        assert len(symbols) == 19
        assert symbols[0] == "BTCUSDT"

    def test_target_first(self):
        assert symbols_with_target(["ETHUSDT", "BTCUSDT", "XRPUSDT"], "BTCUSDT") == ("BTCUSDT", "ETHUSDT", "XRPUSDT")
