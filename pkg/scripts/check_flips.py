"""Dev harness: verify every benchmark instance flips its scenario to a violation."""
import sys, time
from concurrent.futures import ProcessPoolExecutor

from causetrace.benchmark import builtin_instances, load_builtin_scenario
from causetrace.runner import AdsConfig, rtest
from causetrace.oracles import OracleConfig


def run_one(inst_id):
    insts = {i.id: i for i in builtin_instances()}
    inst = insts[inst_id]
    sc = load_builtin_scenario(inst.scenario)
    t0 = time.time()
    res = rtest(sc, AdsConfig(faults=[inst.fault]), OracleConfig())
    el = time.time() - t0
    kinds = [v["kind"] for v in res.verdict.violations]
    ok = (not res.verdict.passed) and inst.expected_violation in kinds
    detail = [(v["kind"], v["t"], round(v.get("distance", -1), 3)) for v in res.verdict.violations]
    return inst_id, ok, detail, res.trace.message_count(), round(el, 2)


if __name__ == "__main__":
    ids = [i.id for i in builtin_instances()]
    if len(sys.argv) > 1:
        ids = [i for i in ids if any(a in i for a in sys.argv[1:])]
    t0 = time.time()
    with ProcessPoolExecutor(max_workers=4) as ex:
        results = list(ex.map(run_one, ids))
    bad = 0
    for inst_id, ok, detail, msgs, el in results:
        mark = "OK " if ok else "FAIL"
        if not ok:
            bad += 1
        print(f"{mark} {inst_id:18s} viol={detail} |M|={msgs} wall={el}s")
    print(f"\n{len(results) - bad}/{len(results)} flip as expected; total {time.time()-t0:.0f}s")
