"""Regenerate the synthetic gauge fixture.

Sixteen sites along a river. Fourteen of them report every month from
1996-09 through 2002-09 (73 months) and have a gap in the month on either
side; the other two cover only the early or late part of the record. The
largest fully observed block is therefore 14 sites x 73 months.

Monthly maxima follow a banded VAR(1) in upstream-to-downstream order; each
month gets three daily readings whose maximum is that month's value.
"""

import csv
import random

rng = random.Random(20240611)

MONTHS = 120  # 1995-01 .. 2004-12
CORE = list(range(14))
WINDOW = (20, 92)  # inclusive month offsets

# longitude increases downstream; ids are shuffled so id order != river order
river = list(range(16))
ids = [f"G{k:03d}" for k in rng.sample(range(100, 999), 16)]
lon = [-97.0 + 0.11 * k + rng.uniform(-0.03, 0.03) for k in river]
lat = [41.0 + 0.4 * ((k * 7) % 5) / 5 + rng.uniform(-0.02, 0.02) for k in river]

# banded VAR(1) along the river
y = [0.0] * 16
monthly = []
for t in range(MONTHS + 50):
    new = []
    for k in range(16):
        v = 0.35 * y[k]
        if k > 0:
            v += 0.3 * y[k - 1]
        if k < 15:
            v += 0.1 * y[k + 1]
        new.append(v + rng.gauss(0.0, 1.0))
    y = new
    if t >= 50:
        monthly.append(y)


def observed(site, m):
    if site in CORE:
        if m in (WINDOW[0] - 1, WINDOW[1] + 1):
            return False
        if WINDOW[0] <= m <= WINDOW[1]:
            return True
        return rng.random() < 0.7
    if site == 14:
        return m <= 60
    return m >= 50


rows = []
for m in range(MONTHS):
    year, month = 1995 + m // 12, m % 12 + 1
    for site in range(16):
        if not observed(site, m):
            continue
        peak = 5.0 + monthly[m][site]
        days = sorted(rng.sample(range(1, 29), 3))
        hit = rng.randrange(3)
        for j, day in enumerate(days):
            value = peak if j == hit else peak - rng.uniform(0.1, 2.0)
            rows.append((ids[site], f"{year:04d}-{month:02d}-{day:02d}", f"{value:.4f}"))

rows.sort(key=lambda r: (r[1], r[0]))
with open("records.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["site_id", "date", "value"])
    w.writerows(rows)

with open("locations.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["site_id", "longitude", "latitude"])
    for site in sorted(range(16), key=lambda s: ids[s]):
        w.writerow([ids[site], f"{lon[site]:.5f}", f"{lat[site]:.5f}"])
