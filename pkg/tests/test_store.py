import os

import pytest

from qistack.model import (
    CircuitText,
    Job,
    JobKind,
    JobState,
    Origin,
    advance_state,
    new_job_id,
)
from qistack.store import AccountingLedger, Journal, TokenStore


def make_job():
    return Job(
        id=new_job_id(),
        origin=Origin("local", "alice"),
        kind=JobKind.PURE_QUANTUM,
        payload=CircuitText("version 1.0; qubits 1; measure_all"),
        shots=10,
        backend="emulator-1",
        submitted_at=5,
    )


class TestJournal:
    def test_round_trip_across_restart(self, tmp_path):
        path = os.path.join(str(tmp_path), "journal.ndjson")
        job = make_job()
        Journal(path).record_job(job)
        assert Journal(path).load_jobs() == [job]

    def test_last_write_wins(self, tmp_path):
        path = os.path.join(str(tmp_path), "journal.ndjson")
        journal = Journal(path)
        job = make_job()
        journal.record_job(job)
        journal.record_job(advance_state(job, "dispatch", now=9))
        (restored,) = Journal(path).load_jobs()
        assert restored.state is JobState.DISPATCHED
        assert restored.started_at == 9

    def test_compaction_collapses_duplicates(self, tmp_path):
        path = os.path.join(str(tmp_path), "journal.ndjson")
        journal = Journal(path)
        job = make_job()
        for _ in range(50):
            journal.record_job(job)
        Journal(path)  # reopening compacts
        with open(path) as f:
            assert sum(1 for _ in f) == 1


class TestLedger:
    def test_append_only(self, tmp_path):
        from qistack.model import AccountingRecord

        ledger = AccountingLedger(os.path.join(str(tmp_path), "acc.ndjson"))
        record = AccountingRecord(
            job_id="j1",
            origin=Origin("hpc", "bob"),
            backend="emulator-1",
            submitted_at=1,
            started_at=2,
            finished_at=3,
            final_state=JobState.COMPLETED,
            quantum_busy_ms=4,
            iterations=5,
        )
        ledger.append(record)
        ledger.append(record)
        rows = ledger.read_all()
        assert len(rows) == 2
        assert rows[0]["job_id"] == "j1"
        assert rows[0]["final_state"] == "completed"


class TestTokenStore:
    def make(self, tmp_path):
        return TokenStore(Journal(os.path.join(str(tmp_path), "journal.ndjson")))

    def test_create_and_verify(self, tmp_path):
        store = self.make(tmp_path)
        secret = store.create("hpc", "bob")
        info = store.verify(secret)
        assert (info.cluster, info.user) == ("hpc", "bob")

    def test_wrong_secret_rejected(self, tmp_path):
        store = self.make(tmp_path)
        store.create("hpc", "bob")
        assert store.verify("not-the-secret") is None
        assert store.verify("") is None

    def test_one_active_token_per_cluster(self, tmp_path):
        store = self.make(tmp_path)
        store.create("hpc", "bob")
        with pytest.raises(ValueError):
            store.create("hpc", "carol")

    def test_revoke_allows_reissue(self, tmp_path):
        store = self.make(tmp_path)
        old = store.create("hpc", "bob")
        assert store.revoke("hpc") is True
        assert store.verify(old) is None
        fresh = store.create("hpc", "bob")
        assert store.verify(fresh) is not None

    def test_secret_never_stored_in_plain(self, tmp_path):
        path = os.path.join(str(tmp_path), "journal.ndjson")
        store = TokenStore(Journal(path))
        secret = store.create("hpc", "bob")
        with open(path) as f:
            assert secret not in f.read()

    def test_survives_restart(self, tmp_path):
        path = os.path.join(str(tmp_path), "journal.ndjson")
        secret = TokenStore(Journal(path)).create("hpc", "bob")
        assert TokenStore(Journal(path)).verify(secret).user == "bob"
