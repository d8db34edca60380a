#!/usr/bin/env python3
"""Independent reference scorer used once to freeze the metric fixture.

Writes crates/metrics/tests/fixtures/frozen_20.jsonl. Pure standard library.
"""
import json
import math
import re
import sys
from collections import Counter
from pathlib import Path

EPS = 0.1
TOKEN = re.compile(r"[^\W_]+|[^\w\s]|_")


def tok(text):
    return TOKEN.findall(text.lower())


def sentences(text):
    out = []
    for line in text.split("\n"):
        cur = []
        for t in tok(line):
            cur.append(t)
            if t == ".":
                out.append(cur)
                cur = []
        if cur:
            out.append(cur)
    return out


def grams(ts, n):
    return Counter(tuple(ts[i:i + n]) for i in range(len(ts) - n + 1))


def bleu(h, r, max_n):
    if not h:
        return 0.0
    logs = 0.0
    for n in range(1, max_n + 1):
        hg, rg = grams(h, n), grams(r, n)
        hit = sum(min(c, rg[g]) for g, c in hg.items())
        total = max(len(h) - n + 1, 0)
        p = hit / total if hit else EPS / max(total, 1)
        logs += math.log(p)
    bp = 1.0 if len(h) > len(r) else math.exp(1 - len(r) / len(h))
    return bp * math.exp(logs / max_n)


def prf(hit, nh, nr):
    p = hit / nh if nh else 0.0
    r = hit / nr if nr else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def rouge_n(h, r, n):
    hg, rg = grams(h, n), grams(r, n)
    hit = sum((hg & rg).values())
    return prf(hit, max(len(h) - n + 1, 0), max(len(r) - n + 1, 0))


def lcs_len(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def lcs_ref_positions(ref, cand):
    t = [[0] * (len(cand) + 1) for _ in range(len(ref) + 1)]
    for i in range(len(ref)):
        for j in range(len(cand)):
            t[i + 1][j + 1] = t[i][j] + 1 if ref[i] == cand[j] else max(t[i][j + 1], t[i + 1][j])
    i, j, pos = len(ref), len(cand), []
    while i and j:
        if ref[i - 1] == cand[j - 1]:
            pos.append(i - 1)
            i, j = i - 1, j - 1
        elif t[i][j - 1] > t[i - 1][j]:
            j -= 1
        else:
            i -= 1
    return pos


def rouge_lsum(hyp_text, ref_text):
    hs, rs = sentences(hyp_text), sentences(ref_text)
    nh = sum(map(len, hs))
    nr = sum(map(len, rs))
    hc = Counter(t for s in hs for t in s)
    rc = Counter(t for s in rs for t in s)
    hit = 0
    for r in rs:
        union = sorted({p for h in hs for p in lcs_ref_positions(r, h)})
        for p in union:
            w = r[p]
            if hc[w] > 0 and rc[w] > 0:
                hit += 1
                hc[w] -= 1
                rc[w] -= 1
    return prf(hit, nh, nr)


def stem(w):
    for suf in ("ing", "ed"):
        if w.endswith(suf) and len(w) - len(suf) >= 3:
            return w[: -len(suf)]
    if w.endswith("es") and len(w) >= 5 and w[:-2].endswith(("s", "x", "z", "ch", "sh")):
        return w[:-2]
    if w.endswith("s") and len(w) >= 4:
        return w[:-1]
    return w


def meteor(h, r):
    align = {}
    taken = set()
    for key in (lambda x: x, stem):
        for i, w in enumerate(h):
            if i in align:
                continue
            free = [j for j in range(len(r)) if j not in taken and key(r[j]) == key(w)]
            if not free:
                continue
            prev = align.get(i - 1)
            j = prev + 1 if prev is not None and prev + 1 in free else free[0]
            align[i] = j
            taken.add(j)
    m = len(align)
    if m == 0:
        return 0.0
    order = sorted(align.items())
    chunks = 1 + sum(
        1 for (a, b), (c, d) in zip(order, order[1:]) if not (c == a + 1 and d == b + 1)
    )
    p, rr = m / len(h), m / len(r)
    fmean = 10 * p * rr / (rr + 9 * p)
    return fmean * (1 - 0.5 * (chunks / m) ** 3)


PAIRS = [
    ("Normal awake EEG.", "Normal awake and asleep EEG."),
    ("the cat", "the cat sat"),
    ("the cat sat", "the sat cat"),
    ("Posterior dominant rhythm of 9 Hz.", "Posterior dominant rhythm of 9 Hz."),
    ("Frequent left temporal sharp waves. Abnormal study.",
     "Abnormal study.\nOccasional left temporal sharp waves were seen."),
    ("Diffuse slowing present.", "Diffuse theta slowing without posterior rhythm."),
    ("spikes seen over the right hemisphere", "spike seen over right hemispheres"),
    ("", "Normal EEG."),
    ("Generalized spike-and-wave discharges at 3 Hz.",
     "Generalized 3 Hz spike and wave discharges."),
    ("alpha beta gamma delta theta kappa lambda omicron sigma tau upsilon phi chi psi omega rho pi nu xi mu",
     "one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty"),
    ("No epileptiform abnormalities. No events.", "No events. No epileptiform abnormalities."),
    ("The background is well organized.\nNo focal slowing.",
     "The background is well organized and reactive.\nThere is no focal slowing.\nNormal EEG."),
    ("seizure seizure seizure", "seizure"),
    ("Two electrographic seizures arising from the right temporal region.",
     "One electrographic seizure arising from the left temporal region."),
    ("Intermittent rhythmic delta activity, left temporal.",
     "Intermittent left temporal rhythmic delta activity (TIRDA)."),
    ("Beta activity, likely medication effect.", "Excess beta activity consistent with benzodiazepines."),
    ("normal", "normal"),
    ("Abnormal EEG due to focal slowing. Clinical correlation is advised.",
     "Abnormal EEG due to focal slowing."),
    ("Photic stimulation produced a driving response.", "Hyperventilation was not performed."),
    ("Sleep spindles and vertex waves are present. K-complexes noted.",
     "Stage 2 sleep with spindles, vertex waves and K-complexes."),
]


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(
        __file__).resolve().parent.parent / "crates/metrics/tests/fixtures/frozen_20.jsonl"
    with open(out, "w") as f:
        for i, (hyp, ref) in enumerate(PAIRS):
            h, r = tok(hyp), tok(ref)
            rec = {
                "id": f"m{i:02d}",
                "hypothesis": hyp,
                "reference": ref,
                "bleu1": bleu(h, r, 1),
                "bleu4": bleu(h, r, 4),
                "rouge1": rouge_n(h, r, 1)[2],
                "rouge2": rouge_n(h, r, 2)[2],
                "rougeL": prf(lcs_len(h, r), len(h), len(r))[2],
                "rougeLsum": rouge_lsum(hyp, ref)[2],
                "meteor": meteor(h, r),
            }
            f.write(json.dumps(rec) + "\n")
    print(f"wrote {len(PAIRS)} pairs to {out}")


if __name__ == "__main__":
    main()
