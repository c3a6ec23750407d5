"""Parses every digraph printed by `hdas export-dot` with pydot."""

import pathlib
import subprocess
import sys
import tempfile

import pydot


def main() -> int:
    cli, genotype = sys.argv[1], sys.argv[2]
    with tempfile.TemporaryDirectory() as out:
        subprocess.run([cli, "export-dot", genotype, "--out", out], check=True, capture_output=True)
        files = list(pathlib.Path(out).glob("*.dot"))
        if len(files) != 1:
            print(f"expected one dot file, found {len(files)}")
            return 1
        text = files[0].read_text()
    graphs = pydot.graph_from_dot_data(text)
    if not graphs:
        print("pydot could not parse the export")
        return 1
    names = [g.get_name().strip('"') for g in graphs]
    for g in graphs:
        if not g.get_edges():
            print(f"graph {g.get_name()} has no edges")
            return 1
    print(f"parsed {len(graphs)} graphs: {', '.join(names)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
