#!/usr/bin/env python3
"""Writes tests/vectors/messages.txt: wire encodings over the p=23 group
built straight from the byte layout, with the expected decode and shape
outcome for each."""

import struct
import sys

KINDS = {"INIT": 1, "IREPLY": 2, "IGROUP": 3, "JOIN": 4, "JREPLY": 5, "JGROUP": 6, "DEL": 7, "DGROUP": 8}


def nonce(seed):
    return bytes((seed * 7 + i) & 0xFF for i in range(16))


def entry(pid, blinded, response=None, has=None):
    out = struct.pack(">I", pid) + nonce(pid)
    flag = (0 if response is None else 1) if has is None else has
    out += bytes([flag, blinded])
    if response is not None:
        out += bytes([response])
    return out


def message(kind, sender, epoch, entries, sig=b"\xaa" * 4, count=None):
    kind_byte = KINDS[kind] if isinstance(kind, str) else kind
    n = len(entries) if count is None else count
    body = bytes([kind_byte]) + struct.pack(">I", sender) + nonce(sender) + struct.pack(">QH", epoch, n)
    body += b"".join(entries)
    return body + struct.pack(">H", len(sig)) + sig


def ok(kind, sender, epoch, n):
    return f"{kind}/{sender}/{epoch}/{n}"


def vectors():
    yield "init", message("INIT", 5, 0, []), ok("INIT", 5, 0, 0), "ok"
    yield "del", message("DEL", 9, 3, []), ok("DEL", 9, 3, 0), "ok"
    yield "ireply", message("IREPLY", 4, 2, [entry(4, 16)]), ok("IREPLY", 4, 2, 1), "ok"
    yield "join", message("JOIN", 4, 2, [entry(4, 9)]), ok("JOIN", 4, 2, 1), "ok"
    yield "igroup-empty", message("IGROUP", 1, 1, []), ok("IGROUP", 1, 1, 0), "ok"
    yield "igroup-two", message("IGROUP", 1, 7, [entry(2, 16, 2), entry(3, 9, 16)]), ok("IGROUP", 1, 7, 2), "ok"
    yield "jgroup", message("JGROUP", 1, 8, [entry(2, 16, 2)]), ok("JGROUP", 1, 8, 1), "ok"
    yield "dgroup", message("DGROUP", 1, 9, [entry(3, 9, 16)]), ok("DGROUP", 1, 9, 1), "ok"
    yield "jreply", message("JREPLY", 1, 4, [entry(2, 16), entry(3, 9)]), ok("JREPLY", 1, 4, 2), "ok"
    yield "empty-signature", message("INIT", 5, 0, [], sig=b""), ok("INIT", 5, 0, 0), "ok"
    yield "epoch-max", message("INIT", 5, 2**64 - 1, []), ok("INIT", 5, 2**64 - 1, 0), "ok"

    yield "kind-zero", message(0, 5, 0, []), "UnknownKind", "-"
    yield "kind-nine", message(9, 5, 0, []), "UnknownKind", "-"
    yield "kind-ff", message(0xFF, 5, 0, []), "UnknownKind", "-"
    yield "empty", b"", "BadLength", "-"
    yield "short-header", message("INIT", 5, 0, [])[:20], "BadLength", "-"
    yield "missing-signature-length", message("INIT", 5, 0, [])[:31], "BadLength", "-"
    yield "short-signature", message("INIT", 5, 0, [])[:-1], "BadLength", "-"
    yield "trailing", message("INIT", 5, 0, []) + b"\x00", "BadLength", "-"
    yield "count-too-large", message("IGROUP", 1, 1, [entry(2, 16, 2)], count=2), "BadLength", "-"
    yield "has-response-two", message("IGROUP", 1, 1, [entry(2, 16, 2, has=2)]), "ShapeViolation", "-"
    yield "blinded-zero", message("IREPLY", 4, 0, [entry(4, 0)]), "NotInSubgroup", "-"
    yield "blinded-five", message("IREPLY", 4, 0, [entry(4, 5)]), "NotInSubgroup", "-"
    yield "blinded-p", message("IREPLY", 4, 0, [entry(4, 23)]), "NotInSubgroup", "-"
    yield "response-outside", message("IGROUP", 1, 1, [entry(2, 16, 7)]), "NotInSubgroup", "-"

    yield "init-with-entry", message("INIT", 5, 0, [entry(2, 16)]), ok("INIT", 5, 0, 1), "ShapeViolation"
    yield "ireply-two", message("IREPLY", 4, 0, [entry(4, 16), entry(3, 9)]), ok("IREPLY", 4, 0, 2), "ShapeViolation"
    yield "ireply-other", message("IREPLY", 4, 0, [entry(3, 16)]), ok("IREPLY", 4, 0, 1), "ShapeViolation"
    yield "ireply-response", message("IREPLY", 4, 0, [entry(4, 16, 2)]), ok("IREPLY", 4, 0, 1), "ShapeViolation"
    yield "ireply-none", message("IREPLY", 4, 0, []), ok("IREPLY", 4, 0, 0), "ShapeViolation"
    yield "igroup-no-response", message("IGROUP", 1, 1, [entry(2, 16)]), ok("IGROUP", 1, 1, 1), "ShapeViolation"
    yield "igroup-self", message("IGROUP", 1, 1, [entry(1, 16, 2)]), ok("IGROUP", 1, 1, 1), "ShapeViolation"
    yield "igroup-dup", message("IGROUP", 1, 1, [entry(2, 16, 2), entry(2, 9, 16)]), ok("IGROUP", 1, 1, 2), "ShapeViolation"
    yield "jreply-response", message("JREPLY", 1, 1, [entry(2, 16, 2)]), ok("JREPLY", 1, 1, 1), "ShapeViolation"
    yield "del-with-entry", message("DEL", 9, 0, [entry(9, 16)]), ok("DEL", 9, 0, 1), "ShapeViolation"


def main():
    out = sys.stdout if len(sys.argv) < 2 else open(sys.argv[1], "w")
    out.write("# name wire-hex decode shape\n")
    out.write("# decode: KIND/sender/epoch/entries or an error code; shape: ok, an error code, or -\n")
    for name, wire, decode, shape in vectors():
        out.write(f"{name} {wire.hex() or '-'} {decode} {shape}\n")


if __name__ == "__main__":
    main()
