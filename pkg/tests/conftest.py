import numpy as np
import pytest

from sucp.data import CheckInLog, DatasetSplit
from sucp.synthetic import CorpusSpec, write_corpus

DAY = 86400.0
T0 = 1293840000.0  # 2011-01-01 00:00 UTC, a Saturday


def make_log(rows, coords=None) -> CheckInLog:
    """Build a log from ``(user, poi, ts)`` or ``(user, poi, lat, lon, ts)`` tuples.

    Ids get dense indices in order of first appearance.  Without coordinates a
    POI named ``p<k>`` sits at (0, 0.01 k).
    """
    uidx, pidx, pc = {}, {}, []
    us, ps, la, lo, ts = [], [], [], [], []
    for r in rows:
        if len(r) == 3:
            u, p, t = r
            k = int(str(p).lstrip("p")) if str(p).lstrip("p").isdigit() else len(pidx)
            lat, lon = (coords or {}).get(p, (0.0, 0.01 * k))
        else:
            u, p, lat, lon, t = r
        us.append(uidx.setdefault(u, len(uidx)))
        if p not in pidx:
            pidx[p] = len(pidx)
            pc.append((lat, lon))
        ps.append(pidx[p])
        la.append(lat)
        lo.append(lon)
        ts.append(float(t))
    return CheckInLog(np.array(us, dtype=np.int64), np.array(ps, dtype=np.int64), np.array(la), np.array(lo),
                      np.array(ts), tuple(uidx), tuple(pidx), np.array(pc, dtype=float).reshape(-1, 2))


def split_by_part(rows_with_part) -> DatasetSplit:
    """``(user, poi, ts, part)`` rows with part in train/valid/test."""
    log_ = make_log([r[:3] for r in rows_with_part])
    parts = np.array([r[3] for r in rows_with_part])
    return DatasetSplit(*(log_.subset(np.flatnonzero(parts == p)) for p in ("train", "valid", "test")))


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """The default 200-user synthetic corpus on disk."""
    d = tmp_path_factory.mktemp("corpus")
    write_corpus(str(d), CorpusSpec())
    return d


@pytest.fixture
def run_conf(corpus_dir, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text(f"data.checkins = {corpus_dir / 'checkins.tsv'}\n"
                    f"data.friendships = {corpus_dir / 'friendships.tsv'}\n"
                    f"cache_dir = {tmp_path / 'cache'}\n")
    return conf


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """``criterion(k, ok, detail)`` records one acceptance verdict and returns ``ok``."""
    def record(k: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[k] = (bool(ok), detail)
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
