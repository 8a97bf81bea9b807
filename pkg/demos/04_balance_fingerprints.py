# Low-order balance digits as a tracking tag.
#
# Someone sends an odd amount so the last digits of your balance become
# recognisable. The tag survives until you send a transaction that changes
# those digits.
from chainprofiler import fingerprint as fp, synthetic

print(fp.fingerprint(12_345_678_901_234_567, 9))

data = synthetic.generate(500, seed=7)
ledger = fp.replay_balances(data.transactions)
print("addresses:", len(ledger), "approximate ledger:", ledger.approximate)

# Share of sent transactions that alter the last 9 digits.
for cutoff in (50, None):
    rate = fp.fingerprint_change_rate(ledger, 9, cutoff)
    print(f"cutoff {cutoff}: p={rate.p:.3f} over {rate.tx_count} txs, avg sent {rate.avg_sent:.2f}")

# An address sending x transactions keeps its tag with chance (1-p)^x.
# Averaging over a power-law of x gives the integral estimate instead.
k = fp.fit_power_law(list(ledger.tx_counts().values()))
rate = fp.fingerprint_change_rate(ledger, 9)
print("power-law exponent", round(k, 3))
print("point estimate   ", fp.survival_probability_point(rate.p, rate.avg_sent))
print("integral estimate", fp.survival_probability_integral(rate.p, k, normalized=True))

# Published per-cutoff counts: addresses, sent txs, tag-changing txs.
counts = {"50": (56_399, 120_461, 61_393), "100": (56_973, 161_427, 73_340),
          "500": (57_951, 384_369, 129_431), "all": (58_367, 1_137_558, 352_042)}
for cutoff, (n, txs, changing) in counts.items():
    s = fp.survival_probability_point(changing / txs, txs / n)
    print(f"{cutoff:>4}: avg {txs / n:5.2f} sent, survival {100 * s:.3f}%")

# How evenly spread are the tags themselves?
h, gain = fp.fingerprint_entropy(ledger.final_balances().values(), d=8)
print(f"entropy {h:.2f} bits, gain {gain:.2f} bits")
