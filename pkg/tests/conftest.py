import pytest

from cdt_ising.triangulation import enumerate_torus_triangulations

ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}
TITLES = {
    1: "strip-count oracle",
    2: "FK vs spin-sum identity",
    3: "partition expansion identity",
    4: "spectral radius consistency",
    5: "growth-rate trend and divergence onset",
    6: "small-beta pinch",
    7: "critical-region geometry",
    8: "free-energy sandwich surrogate",
    9: "Griffiths monotonicity",
    10: "MCMC exactness",
}


@pytest.fixture
def record():
    """Record one part of an acceptance criterion: record(cid, part, ok, detail)."""

    def _record(cid: int, part: str, ok: bool, detail: str = ""):
        ACCEPTANCE.setdefault(cid, []).append((part, bool(ok), detail))
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[cid]
        ok = all(p[1] for p in parts)
        tr.write_line(f"criterion {cid:2d} {'PASS' if ok else 'FAIL'}  {TITLES.get(cid, '')}")
        for part, pok, detail in parts:
            tr.write_line(f"    {'pass' if pok else 'FAIL'}  {part}: {detail}")


@pytest.fixture(scope="session")
def small_tris():
    """Every triangulation with N <= 2, slice sizes <= 3 and at most 12 triangles."""
    out = []
    for N in (1, 2):
        out += [t for t in enumerate_torus_triangulations(N, 3) if t.n_triangles <= 12]
    return out
