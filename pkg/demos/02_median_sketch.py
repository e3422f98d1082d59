"""A median is holistic: exact answers need the values themselves. This demo
shows the two distributed routes - gathering the filtered column for an
exact median, and merging fixed-width histograms for a bounded-error
approximation."""

import random

from _cluster import start_cluster

from skyshard import ColumnType, PartitionPolicy, Schema, Table

driver, shutdown = start_cluster(2)
rng = random.Random(9)

values = [rng.gauss(50.0, 15.0) for _ in range(20_001)]
lo, hi = min(values), max(values)
table = Table(Schema([("v", ColumnType.FLOAT64)]), [(v,) for v in values])
driver.write_table("signal", table, PartitionPolicy(target_rows=1024))
print(f"== 20,001 values over {len(driver.catalog.table('signal').objects)} objects, "
      f"range [{lo:.2f}, {hi:.2f}]")

exact = driver.execute_text("SELECT median(v) FROM signal")
ordered = sorted(values)
print(f"\n== exact distributed median: {exact:.6f} "
      f"(sorted-oracle check: {ordered[len(ordered) // 2]:.6f})")
print("   each node ships only its filtered column values, merged in one pass")

print("\n== histogram sketch: two rounds, bounded error")
driver.rounds_dispatched = 0
for bins in (64, 1024, 16384):
    approx = driver.execute_text(f"SELECT median_approx(v) BINS {bins} FROM signal")
    bound = (hi - lo) / bins
    print(f"   bins={bins:>6}: {approx:.6f}  |err| = {abs(approx - exact):.6f} "
          f"<= bin width {bound:.6f}")
print(f"   ({driver.rounds_dispatched // 3} rounds per query: min/max pass, histogram pass)")

print("\n== the bound survives predicates (range comes from the filtered min/max)")
exact = driver.execute_text("SELECT median(v) FROM signal WHERE v > 60.0")
approx = driver.execute_text("SELECT median_approx(v) BINS 1024 FROM signal WHERE v > 60.0")
print(f"   WHERE v > 60: exact {exact:.6f}, approx {approx:.6f}, "
      f"|err| {abs(approx - exact):.2e}")

shutdown()
print("\ndone.")
