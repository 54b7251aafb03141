#!/usr/bin/env python3
"""Janino widens private fields to package access. Restore ACC_PRIVATE on
fields declared private in the matching source file."""
import re
import struct
import sys
from pathlib import Path

FIELD_DECL = re.compile(r"^\s*private\s+(?:static\s+)?(?:final\s+)?[\w.\[\]<>]+\s+(\w+)\s*[;=]", re.M)


def private_fields(source):
    return set(FIELD_DECL.findall(source.read_text()))


def patch(class_path, names):
    data = bytearray(class_path.read_bytes())
    assert data[:4] == b"\xca\xfe\xba\xbe", class_path
    pos = 8
    count = struct.unpack_from(">H", data, pos)[0]
    pos += 2
    utf8 = {}
    i = 1
    while i < count:
        tag = data[pos]
        if tag == 1:
            n = struct.unpack_from(">H", data, pos + 1)[0]
            utf8[i] = data[pos + 3:pos + 3 + n].decode("utf-8", "replace")
            pos += 3 + n
        elif tag in (3, 4):
            pos += 5
        elif tag in (5, 6):
            pos += 9
            i += 1
        elif tag in (7, 8, 16, 19, 20):
            pos += 3
        elif tag == 15:
            pos += 4
        elif tag in (9, 10, 11, 12, 17, 18):
            pos += 5
        else:
            raise ValueError(f"{class_path}: tag {tag}")
        i += 1
    pos += 6
    interfaces = struct.unpack_from(">H", data, pos)[0]
    pos += 2 + 2 * interfaces
    fields = struct.unpack_from(">H", data, pos)[0]
    pos += 2
    for _ in range(fields):
        flags, name_idx, _desc, attrs = struct.unpack_from(">HHHH", data, pos)
        if utf8[name_idx] in names:
            struct.pack_into(">H", data, pos, (flags | 0x0002) & ~0x0005)
        pos += 8
        for _ in range(attrs):
            length = struct.unpack_from(">I", data, pos + 2)[0]
            pos += 6 + length
    class_path.write_bytes(bytes(data))


def main(src_root, class_root):
    for source in Path(src_root).rglob("*.java"):
        rel = source.relative_to(src_root).with_suffix(".class")
        target = Path(class_root) / rel
        names = private_fields(source)
        if names and target.exists():
            patch(target, names)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
