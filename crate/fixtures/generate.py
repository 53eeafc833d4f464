#!/usr/bin/env python3
"""Regenerate the checked-in parallel-corpus and CoNLL-U fixtures.

Every sentence is built from a template together with its UD parse, so the
fixtures do not depend on any external parser. Output is deterministic.

    python3 fixtures/generate.py
"""

import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
SEP = "<::::>"

NAMES = ["Anna", "Bob", "Carla", "David", "Elena", "Frank", "Grace", "Hugo",
         "Irene", "Jonas", "Karim", "Lena", "Marco", "Nina", "Oscar", "Paula",
         "Rosa", "Simon", "Tara", "Victor"]
PLACES = ["Rome", "Paris", "Berlin", "Madrid", "Vienna", "Lisbon", "Oslo",
          "Prague", "Dublin", "Athens", "Warsaw", "Zurich"]
TRANSITIVE = ["visited", "praised", "painted", "sold", "bought", "repaired",
              "cleaned", "opened", "closed", "found", "built", "moved"]
OBJECTS = ["car", "house", "book", "letter", "door", "window", "garden",
           "boat", "piano", "painting", "bridge", "clock"]
INTRANSITIVE = ["laughed", "smiled", "slept", "left", "arrived", "sang",
                "danced", "cried", "waited", "retired", "worked", "lived"]
PARTICIPLES = ["born", "raised", "trained", "educated", "married", "buried",
               "elected", "hired", "ordained", "baptized"]
COORD = ["and", "but", "yet"]
SUBORD = ["because", "although", "while", "when"]


class Sent:
    def __init__(self):
        self.rows = []

    def add(self, form, upos, feats="_", head=0, rel="root"):
        self.rows.append({"form": form, "upos": upos, "feats": feats,
                          "head": head, "rel": rel, "extra": []})
        return len(self.rows)

    def set_head(self, idx, head, rel):
        self.rows[idx - 1]["head"] = head
        self.rows[idx - 1]["rel"] = rel

    def enhanced(self, dep, head, rel):
        self.rows[dep - 1]["extra"].append((head, rel))

    def tokens(self):
        return [r["form"] for r in self.rows]

    def conllu(self, sent_id):
        out = [f"# sent_id = {sent_id}", "# text = " + " ".join(self.tokens())]
        for i, r in enumerate(self.rows, 1):
            deps = "_"
            if r["extra"]:
                arcs = [(r["head"], r["rel"])] + r["extra"]
                arcs.sort(key=lambda a: (a[0], a[1]))
                deps = "|".join(f"{h}:{rel}" for h, rel in arcs)
            out.append("\t".join([str(i), r["form"], r["form"].lower(), r["upos"],
                                  "_", r["feats"], str(r["head"]), r["rel"],
                                  deps, "_"]))
        return "\n".join(out) + "\n"


FIN = "Mood=Ind|Tense=Past|VerbForm=Fin"
PART = "Tense=Past|VerbForm=Part|Voice=Pass"


def transitive_clause(s, subj, verb, obj):
    """subj verb the obj; returns (subj_idx, verb_idx)."""
    si = s.add(subj, "PROPN")
    vi = s.add(verb, "VERB", FIN)
    di = s.add("the", "DET", "Definite=Def|PronType=Art")
    oi = s.add(obj, "NOUN", "Number=Sing")
    s.set_head(si, vi, "nsubj")
    s.set_head(di, oi, "det")
    s.set_head(oi, vi, "obj")
    return si, vi


def simple_transitive(rng):
    s = Sent()
    subj, verb, obj = rng.choice(NAMES), rng.choice(TRANSITIVE), rng.choice(OBJECTS)
    _, vi = transitive_clause(s, subj, verb, obj)
    p = s.add(".", "PUNCT")
    s.set_head(p, vi, "punct")
    return s, [s.tokens()]


def simple_intransitive(rng):
    s = Sent()
    si = s.add(rng.choice(NAMES), "PROPN")
    vi = s.add(rng.choice(INTRANSITIVE), "VERB", FIN)
    ii = s.add("in", "ADP")
    li = s.add(rng.choice(PLACES), "PROPN")
    p = s.add(".", "PUNCT")
    s.set_head(si, vi, "nsubj")
    s.set_head(ii, li, "case")
    s.set_head(li, vi, "obl")
    s.set_head(p, vi, "punct")
    return s, [s.tokens()]


def vp_coordination(rng):
    s = Sent()
    subj = rng.choice(NAMES)
    v1, v2 = rng.sample(TRANSITIVE, 2)
    o1, o2 = rng.sample(OBJECTS, 2)
    si, vi1 = transitive_clause(s, subj, v1, o1)
    ci = s.add("and", "CCONJ")
    vi2 = s.add(v2, "VERB", FIN)
    di = s.add("the", "DET", "Definite=Def|PronType=Art")
    oi = s.add(o2, "NOUN", "Number=Sing")
    p = s.add(".", "PUNCT")
    s.set_head(ci, vi2, "cc")
    s.set_head(vi2, vi1, "conj")
    s.set_head(di, oi, "det")
    s.set_head(oi, vi2, "obj")
    s.set_head(p, vi1, "punct")
    s.enhanced(si, vi2, "nsubj")
    gold = [[subj, v1, "the", o1, "."], [subj, v2, "the", o2, "."]]
    return s, gold


def clause_coordination(rng):
    s = Sent()
    n1, n2 = rng.sample(NAMES, 2)
    v1, v2 = rng.sample(TRANSITIVE, 2)
    o1, o2 = rng.sample(OBJECTS, 2)
    _, vi1 = transitive_clause(s, n1, v1, o1)
    ci = s.add(rng.choice(COORD), "CCONJ")
    _, vi2 = transitive_clause(s, n2, v2, o2)
    p = s.add(".", "PUNCT")
    s.set_head(ci, vi2, "cc")
    s.set_head(vi2, vi1, "conj")
    s.set_head(p, vi1, "punct")
    gold = [[n1, v1, "the", o1, "."], [n2, v2, "the", o2, "."]]
    return s, gold


def passive_coordination(rng):
    """Sokuhi-style: S was P1 in L1 and was P2 in L2 ."""
    s = Sent()
    subj = rng.choice(NAMES)
    p1, p2 = rng.sample(PARTICIPLES, 2)
    l1, l2 = rng.sample(PLACES, 2)
    si = s.add(subj, "PROPN")
    a1 = s.add("was", "AUX", FIN)
    pi1 = s.add(p1, "VERB", PART)
    i1 = s.add("in", "ADP")
    li1 = s.add(l1, "PROPN")
    ci = s.add("and", "CCONJ")
    a2 = s.add("was", "AUX", FIN)
    pi2 = s.add(p2, "VERB", PART)
    i2 = s.add("in", "ADP")
    li2 = s.add(l2, "PROPN")
    p = s.add(".", "PUNCT")
    s.set_head(si, pi1, "nsubj")
    s.set_head(a1, pi1, "aux")
    s.set_head(i1, li1, "case")
    s.set_head(li1, pi1, "obl")
    s.set_head(ci, pi2, "cc")
    s.set_head(a2, pi2, "aux")
    s.set_head(pi2, pi1, "conj")
    s.set_head(i2, li2, "case")
    s.set_head(li2, pi2, "obl")
    s.set_head(p, pi1, "punct")
    s.enhanced(si, pi2, "nsubj")
    gold = [[subj, "was", p1, "in", l1, "."], [subj, "was", p2, "in", l2, "."]]
    return s, gold


def subordinate(rng):
    s = Sent()
    n1, n2 = rng.sample(NAMES, 2)
    v1, v2 = rng.sample(INTRANSITIVE, 2)
    conn = rng.choice(SUBORD)
    if rng.random() < 0.5:
        # S1 V1 conn S2 V2 .
        si1 = s.add(n1, "PROPN")
        vi1 = s.add(v1, "VERB", FIN)
        mi = s.add(conn, "SCONJ")
        si2 = s.add(n2, "PROPN")
        vi2 = s.add(v2, "VERB", FIN)
        p = s.add(".", "PUNCT")
        gold = [[n1, v1, "."], [n2, v2, "."]]
    else:
        # Conn S2 V2 , S1 V1 .
        mi = s.add(conn.capitalize(), "SCONJ")
        si2 = s.add(n2, "PROPN")
        vi2 = s.add(v2, "VERB", FIN)
        ci = s.add(",", "PUNCT")
        si1 = s.add(n1, "PROPN")
        vi1 = s.add(v1, "VERB", FIN)
        p = s.add(".", "PUNCT")
        s.set_head(ci, vi2, "punct")
        gold = [[n2, v2, "."], [n1, v1, "."]]
    s.set_head(si1, vi1, "nsubj")
    s.set_head(mi, vi2, "mark")
    s.set_head(si2, vi2, "nsubj")
    s.set_head(vi2, vi1, "advcl")
    s.set_head(p, vi1, "punct")
    return s, gold


def relative_clause(rng):
    """S , who V1 in L , V2 the O ."""
    s = Sent()
    subj = rng.choice(NAMES)
    v1 = rng.choice(INTRANSITIVE)
    loc = rng.choice(PLACES)
    v2, obj = rng.choice(TRANSITIVE), rng.choice(OBJECTS)
    si = s.add(subj, "PROPN")
    c1 = s.add(",", "PUNCT")
    wi = s.add("who", "PRON", "PronType=Rel")
    vi1 = s.add(v1, "VERB", FIN)
    ii = s.add("in", "ADP")
    li = s.add(loc, "PROPN")
    c2 = s.add(",", "PUNCT")
    vi2 = s.add(v2, "VERB", FIN)
    di = s.add("the", "DET", "Definite=Def|PronType=Art")
    oi = s.add(obj, "NOUN", "Number=Sing")
    p = s.add(".", "PUNCT")
    s.set_head(si, vi2, "nsubj")
    s.set_head(c1, vi1, "punct")
    s.set_head(wi, vi1, "nsubj")
    s.set_head(vi1, si, "acl:relcl")
    s.set_head(ii, li, "case")
    s.set_head(li, vi1, "obl")
    s.set_head(c2, vi1, "punct")
    s.set_head(di, oi, "det")
    s.set_head(oi, vi2, "obj")
    s.set_head(p, vi2, "punct")
    s.enhanced(si, vi1, "nsubj")
    s.enhanced(wi, si, "ref")
    gold = [[subj, v2, "the", obj, "."], [subj, v1, "in", loc, "."]]
    return s, gold


def three_clauses(rng):
    s = Sent()
    n1, n2, n3 = rng.sample(NAMES, 3)
    v1, v2, v3 = rng.sample(TRANSITIVE, 3)
    o1, o2, o3 = rng.sample(OBJECTS, 3)
    _, vi1 = transitive_clause(s, n1, v1, o1)
    ci1 = s.add(",", "PUNCT")
    _, vi2 = transitive_clause(s, n2, v2, o2)
    ci2 = s.add("and", "CCONJ")
    _, vi3 = transitive_clause(s, n3, v3, o3)
    p = s.add(".", "PUNCT")
    s.set_head(ci1, vi2, "punct")
    s.set_head(vi2, vi1, "conj")
    s.set_head(ci2, vi3, "cc")
    s.set_head(vi3, vi1, "conj")
    s.set_head(p, vi1, "punct")
    gold = [[n1, v1, "the", o1, "."], [n2, v2, "the", o2, "."],
            [n3, v3, "the", o3, "."]]
    return s, gold


def sokuhi():
    s = Sent()
    for form, upos, feats in [
        ("Sokuhi", "PROPN", "Number=Sing"), ("was", "AUX", FIN),
        ("born", "VERB", PART), ("in", "ADP", "_"), ("Fujian", "PROPN", "Number=Sing"),
        ("and", "CCONJ", "_"), ("was", "AUX", FIN), ("ordained", "VERB", PART),
        ("at", "ADP", "_"), ("17", "NUM", "NumType=Card"), (".", "PUNCT", "_"),
    ]:
        s.add(form, upos, feats)
    for dep, head, rel in [(1, 3, "nsubj"), (2, 3, "aux"), (3, 0, "root"),
                           (4, 5, "case"), (5, 3, "obl"), (6, 8, "cc"),
                           (7, 8, "aux"), (8, 3, "conj"), (9, 10, "case"),
                           (10, 8, "obl"), (11, 3, "punct")]:
        s.set_head(dep, head, rel)
    s.enhanced(1, 8, "nsubj")
    gold = [["Sokuhi", "was", "born", "in", "Fujian", "."],
            ["Sokuhi", "was", "ordained", "at", "17", "."]]
    return s, gold


def write(stem, items):
    with open(os.path.join(HERE, stem + ".tsv"), "w") as tsv, \
            open(os.path.join(HERE, stem + ".conllu"), "w") as cu:
        for n, (s, gold) in enumerate(items, 1):
            targets = f" {SEP} ".join(" ".join(g) for g in gold)
            tsv.write(" ".join(s.tokens()) + "\t" + targets + "\n")
            cu.write(s.conllu(str(n)) + "\n")


def main():
    write("figure1", [sokuhi()])

    rng = random.Random(20210801)
    complex_templates = [vp_coordination, clause_coordination, passive_coordination,
                         subordinate, relative_clause, three_clauses]
    simple_templates = [simple_transitive, simple_intransitive]

    # Balanced mix: every template cycled in turn.
    mixed = []
    for i in range(240):
        tpl = (complex_templates + simple_templates)[i % 8]
        mixed.append(tpl(rng))
    write("synthetic", mixed)

    # Skewed mix: mostly single-clause sentences.
    skewed = []
    for i in range(500):
        if i % 5 == 0:
            skewed.append(complex_templates[(i // 5) % len(complex_templates)](rng))
        else:
            skewed.append(simple_templates[i % 2](rng))
    write("imbalanced", skewed)


if __name__ == "__main__":
    main()
