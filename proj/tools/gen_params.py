#!/usr/bin/env python3
"""Deterministically generate a prime-order subgroup of Z_p^*.

Usage: gen_params.py <p_bits> <q_bits> <seed-string> <name>

q is the first prime >= a SHA-256 expansion of the seed, p = k*q + 1 is
the first prime found by stepping k from a seeded starting point, and
g = h^((p-1)/q) for the smallest h >= 2 with g != 1.
"""
import hashlib
import sys

import gmpy2


def expand(seed: bytes, bits: int) -> int:
    out = b""
    counter = 0
    while len(out) * 8 < bits:
        out += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
        counter += 1
    value = int.from_bytes(out, "big") >> (len(out) * 8 - bits)
    return value | (1 << (bits - 1))


def main() -> None:
    p_bits, q_bits, seed, name = int(sys.argv[1]), int(sys.argv[2]), sys.argv[3].encode(), sys.argv[4]
    q = int(gmpy2.next_prime(expand(seed + b"/q", q_bits)))
    k = expand(seed + b"/k", p_bits - q_bits) & ~1
    while True:
        p = k * q + 1
        if p.bit_length() == p_bits and gmpy2.is_prime(p, 64):
            break
        k += 2
    h = 2
    while True:
        g = pow(h, (p - 1) // q, p)
        if g != 1:
            break
        h += 1
    assert pow(g, q, p) == 1
    print(f"p={p:x}")
    print(f"q={q:x}")
    print(f"g={g:x}")
    print(f"name={name}")


if __name__ == "__main__":
    main()
