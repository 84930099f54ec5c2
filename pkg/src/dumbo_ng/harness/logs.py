"""Node output logs: one line per block, ``epoch<TAB>time<TAB>hex``."""
from ..codec import decode, encode
from ..types import Block


def format_entry(t, block: Block) -> str:
    return f"{block.epoch}\t{t!r}\t{encode(block).hex()}\n"


def parse_line(line: str):
    epoch, t, blob = line.rstrip("\n").split("\t")
    block = decode(Block, bytes.fromhex(blob))
    if block.epoch != int(epoch):
        raise ValueError(f"epoch column {epoch} disagrees with block {block.epoch}")
    return float(t), block


def write_log(path, entries):
    with open(path, "w") as fp:
        for t, block in entries:
            fp.write(format_entry(t, block))


def read_log(path):
    """List of (output_time, Block); a torn final line is ignored."""
    out = []
    with open(path) as fp:
        lines = fp.readlines()
    for i, line in enumerate(lines):
        if not line.endswith("\n") and i == len(lines) - 1:
            break
        out.append(parse_line(line))
    return out
