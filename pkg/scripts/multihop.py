"""End-to-end delay bound over 1..8 homogeneous hops for N = 2, 3, 4."""

from _common import run

if __name__ == "__main__":
    raise SystemExit(run("multihop", "multihop",
                         "--hops", "1,2,3,4,5,6,7,8", "--n-antennas", "2,3,4"))
