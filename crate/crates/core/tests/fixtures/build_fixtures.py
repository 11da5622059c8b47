#!/usr/bin/env python3
"""Writes the desk-scale fixture corpus next to this script.

Outputs: tables.jsonl (5 tables, 40 cells), sentences.jsonl and parsed.jsonl
(20 sentences with dependency parses), stop_list.txt, domain_exclude.txt.
Rerunning overwrites them with identical bytes.
"""

import json
from pathlib import Path

HERE = Path(__file__).resolve().parent

TABLES = [
    ("38331-tables.pdf", 12, [
        ["RRCReconfiguration", "masterCellGroup"],
        ["the UE", "OPTIONAL, -- Need M"],
        ["spCellConfig", "SEQUENCE"],
        ["Field description", "measConfig"],
    ]),
    ("38331-tables.pdf", 14, [
        ["securityConfig", "cipheringAlgorithm"],
        ["reportConfig", "ENUMERATED {true}"],
        ["RRCReestablishment", "SRB1"],
        ["This field is mandatory", "(t310)"],
    ]),
    ("38331-tables.pdf", 19, [
        ["N310", "securityModeCommand"],
        ["RRCSetup", "masterKeyUpdate"],
        ["cellGroupConfig", "rlc-BearerToAddModList"],
        ["Cond HO", "SEQUENCE"],
    ]),
    ("38331-tables.pdf", 23, [
        ["masterCellGroup", "OPTIONAL"],
        ["UE", "of the network"],
        ["measConfig", "reportConfig"],
        ["Need N", "t310"],
    ]),
    ("38331-tables.pdf", 31, [
        ["securityConfig", "SRB1"],
        ["a timer", "N310"],
        ["RRCSetup", "in"],
        ["for", "RRCReconfiguration,"],
    ]),
]

STOP_LIST = ["the", "of", "a", "an", "is", "to", "in", "and", "for", "this", "field", "description", "mandatory", "timer"]
DOMAIN_EXCLUDE = ["UE", "OPTIONAL", "SEQUENCE", "ENUMERATED", "Need", "Cond", "HO", "M", "N", "{true}", "network"]


def token(word, pos, head, label):
    return (word, pos, head, label)


def svo(subject, verb, obj, subj_det=False, obj_det=False, verb_pos="VBZ"):
    """Subject-verb-object clause with optional determiners and a final period."""
    toks = []
    if subj_det:
        toks.append(("The", "DT", "S", "det"))
    toks.append((subject, "NNP", "V", "nsubj"))
    toks.append((verb, verb_pos, None, "root"))
    if obj_det:
        toks.append(("the", "DT", "O", "det"))
    toks.append((obj, "NNP", "V", "obj"))
    toks.append((".", ".", "V", "punct"))
    return resolve(toks)


def resolve(toks):
    """Replaces symbolic heads S/V/O with token indices."""
    marks = {}
    for i, (_, _, _, label) in enumerate(toks):
        key = {"nsubj": "S", "root": "V", "obj": "O"}.get(label)
        if key and key not in marks:
            marks[key] = i
    out = []
    for word, pos, head, label in toks:
        out.append((word, pos, marks[head] if isinstance(head, str) else head, label))
    return out


def passive():
    # masterCellGroup is included in RRCReconfiguration .
    return [
        ("masterCellGroup", "NNP", 2, "nsubj:pass"),
        ("is", "VBZ", 2, "aux:pass"),
        ("included", "VBN", None, "root"),
        ("in", "IN", 4, "case"),
        ("RRCReconfiguration", "NNP", 2, "obl"),
        (".", ".", 2, "punct"),
    ]


def copula():
    # t310 is a timer .
    return [
        ("t310", "NN", 3, "nsubj"),
        ("is", "VBZ", 3, "cop"),
        ("a", "DT", 3, "det"),
        ("timer", "NN", None, "root"),
        (".", ".", 3, "punct"),
    ]


def two_clauses():
    # spCellConfig defines t310 ; measConfig sets reportConfig .
    return [
        ("spCellConfig", "NNP", 1, "nsubj"),
        ("defines", "VBZ", None, "root"),
        ("t310", "NN", 1, "obj"),
        (";", ":", 1, "punct"),
        ("measConfig", "NNP", 5, "nsubj"),
        ("sets", "VBZ", 1, "parataxis"),
        ("reportConfig", "NNP", 5, "obj"),
        (".", ".", 1, "punct"),
    ]


def long_sentence(total=210):
    toks = [
        ("cellGroupConfig", "NNP", 1, "nsubj"),
        ("contains", "VBZ", None, "root"),
        ("rlc-BearerToAddModList", "NNP", 1, "obj"),
    ]
    filler = ["and", "further", "optional", "entries"]
    while len(toks) < total - 1:
        toks.append((filler[len(toks) % len(filler)], "NN", 1, "dep"))
    toks.append((".", ".", 1, "punct"))
    return toks


SENTENCES = [
    svo("RRCReconfiguration", "includes", "masterCellGroup"),
    svo("masterCellGroup", "contains", "spCellConfig", subj_det=True),
    svo("UE", "verifies", "securityConfig", subj_det=True),
    svo("securityConfig", "utilises", "cipheringAlgorithm"),
    svo("network", "schedules", "measConfig", subj_det=True),
    svo("measConfig", "schedules", "reportConfig"),
    svo("RRCReestablishment", "re-establishes", "SRB1"),
    two_clauses(),
    svo("It", "contains", "t310", verb_pos="VBZ"),
    passive(),
    copula(),
    long_sentence(),
    svo("t310", "counts", "N310"),
    svo("securityModeCommand", "encoded", "cipheringAlgorithm", verb_pos="VBD"),
    svo("RRCSetup", "establishes", "SRB1"),
    svo("UE", "stores", "measConfig", subj_det=True, obj_det=True),
    svo("reportConfig", "denotes", "measId"),
    svo("masterKeyUpdate", "modifies", "securityConfig"),
    svo("SRB1", "carries", "RRCSetup"),
    svo("RRCReconfiguration", "contained", "masterCellGroup,", verb_pos="VBD"),
]


def parsed_record(index, toks):
    edges = [
        {"head": head, "dependent": i, "label": label}
        for i, (_, _, head, label) in enumerate(toks)
    ]
    words = [w for w, _, _, _ in toks]
    return {
        "sentence_id": f"fx-{index:02d}",
        "text": " ".join(words),
        "tokens": words,
        "pos_tags": [p for _, p, _, _ in toks],
        "dep_edges": edges,
    }


def write_lines(name, rows):
    with open(HERE / name, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def main():
    assert len(TABLES) == 5
    assert sum(len(r) for _, _, rows in TABLES for r in rows) == 40
    assert len(SENTENCES) == 20
    write_lines("tables.jsonl", [{"doc": d, "page": p, "rows": rows} for d, p, rows in TABLES])
    parsed = [parsed_record(i + 1, toks) for i, toks in enumerate(SENTENCES)]
    write_lines("parsed.jsonl", parsed)
    write_lines("sentences.jsonl", [{"sentence_id": p["sentence_id"], "text": p["text"]} for p in parsed])
    (HERE / "stop_list.txt").write_text("\n".join(STOP_LIST) + "\n", encoding="utf-8")
    (HERE / "domain_exclude.txt").write_text("\n".join(DOMAIN_EXCLUDE) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
