"""Builds the scripted fixture repository used by the miner and pipeline tests.

Run directly to create it somewhere: ``python tests/fixtures/fixture_repo.py /tmp/bankrepo``.
Expected mining results live next to this file in ``fixture_repo_manifest.json``.
"""

from __future__ import annotations

import os
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).parent
ACCOUNT = (HERE / "corpus" / "Account.java").read_text()

BANK = """\
import java.util.ArrayList;
import java.util.List;

public class Bank {
    private final List<Account> accounts = new ArrayList<>();
    private final Ledger ledger = new Ledger();

    public void open(Account a) {
        accounts.add(a);
    }

    public boolean transfer(Account from, Account to, long amount) {
        if (!from.withdraw(amount)) {
            return false;
        }
        to.deposit(amount);
        ledger.record(amount);
        return true;
    }

    static class Ledger {
        private long total;
        private int capacity = 100;

        void record(long amount) {
            total += amount;
        }

        long total() {
            return total;
        }
    }
}
"""

REPORT = """\
import java.util.Comparator;
import java.util.List;

public class Report {
    private final String title;

    public Report(String title) {
        this.title = title;
    }

    // Orders accounts by balance, richest first.
    public void sort(List<Account> accounts) {
        accounts.sort(new Comparator<Account>() {
            @Override
            public int compare(Account x, Account y) {
                return Long.compare(y.getBalance(), x.getBalance());
            }
        });
    }

    public String header() {
        return "== " + title + " ==";
    }
}
"""

UTIL = """\
public final class Util {
    private Util() {
    }

    public static long round(double value) {
        return (long) value;
    }
}
"""

CLAMP = """\

    public static long clamp(long v, long lo, long hi) {
        return Math.max(lo, Math.min(hi, v));
    }
}
"""

PACKAGE_INFO = "/** Banking sample documentation. */\npackage docs;\n"


def _replace_line(text: str, lineno: int, new: str) -> str:
    lines = text.split("\n")
    lines[lineno - 1] = new
    return "\n".join(lines)


def _insert_after(text: str, lineno: int, new: str) -> str:
    lines = text.split("\n")
    lines.insert(lineno, new)
    return "\n".join(lines)


# (tag, branch, ISO date, message, {path: transform(old_text) -> new_text})
SCRIPT = [
    ("c01", "main", "2021-01-01T00:00:00+00:00", "Initial import", {
        "src/Account.java": lambda _: ACCOUNT,
        "src/Bank.java": lambda _: BANK,
        "src/Report.java": lambda _: REPORT,
        "src/Util.java": lambda _: UTIL,
        "NOTES.txt": lambda _: "Sample banking project.\n",
    }),
    ("fix-1", "main", "2021-02-10T09:00:00+00:00", "Fix bug in Util rounding", {
        "src/Util.java": lambda t: _replace_line(t, 6, "        return Math.round(value);"),
    }),
    ("c03", "main", "2021-04-20T09:00:00+00:00", "Tidy Report formatting", {
        "src/Report.java": lambda t: _replace_line(t, 22, '        return "=== " + title + " ===";'),
    }),
    ("fix-2", "main", "2021-05-05T09:00:00+00:00", "Fixes #7: overdraft check", {
        "src/Account.java": lambda t: _replace_line(
            _replace_line(
                _replace_line(t, 12, "    } // validated owner"),
                13, "    public void deposit(final long amount) {"),
            14, "        if (amount <= 0L) {"),
    }),
    ("c05", "main", "2021-06-20T09:00:00+00:00", "Update Report docs", {
        "src/Report.java": lambda t: _replace_line(t, 11, "    // Orders accounts by balance, largest first."),
    }),
    ("c06", "main", "2021-07-15T09:00:00+00:00", "Tune ledger capacity", {
        "src/Bank.java": lambda t: _replace_line(t, 23, "        private int capacity = 250;"),
    }),
    ("fix-3", "main", "2021-08-20T09:00:00+00:00", "Patch NPE in Report comparator", {
        "src/Report.java": lambda t: _replace_line(
            t, 16, "                return Long.compare(y == null ? 0 : y.getBalance(), x == null ? 0 : x.getBalance());"),
    }),
    ("side-1", "side", "2021-09-05T09:00:00+00:00", "Add bug tracker link", {
        "NOTES.txt": lambda t: t + "Tracker: https://example.invalid/issues\n",
    }),
    ("merge", "main", "2021-09-30T09:00:00+00:00", "Merge branch 'side'", None),
    ("fix-4", "main", "2021-10-10T09:00:00+00:00", "Fixes #9: ledger total", {
        "src/Bank.java": lambda t: _replace_line(t, 26, "            total = Math.addExact(total, amount);"),
    }),
    ("c11", "main", "2021-11-11T09:00:00+00:00", "Add Util.clamp and package docs", {
        "src/Util.java": lambda t: t[: t.rstrip().rfind("}")] + CLAMP,
        "src/docs/package-info.java": lambda _: PACKAGE_INFO,
    }),
    ("fix-5", "main", "2021-12-24T09:00:00+00:00", "Fix fault in Bank transfer and docs", {
        "src/Bank.java": lambda t: _replace_line(t, 13, "        if (from == to || !from.withdraw(amount)) {"),
        "src/docs/package-info.java": lambda t: _replace_line(t, 1, "/** Banking sample docs. */"),
    }),
    ("fix-6", "main", "2022-01-20T09:00:00+00:00", "Fix bug in Util.clamp bounds", {
        "src/Util.java": lambda t: _insert_after(t, 9, "        if (lo > hi) { long t = lo; lo = hi; hi = t; }"),
    }),
    ("c14", "main", "2022-02-01T00:00:00+00:00", "Release 1.1", {
        "NOTES.txt": lambda t: t + "Release 1.1\n",
    }),
]


def _git(repo: Path, *args: str, date: str | None = None) -> str:
    env = dict(os.environ)
    env.update(
        GIT_AUTHOR_NAME="Fixture Author",
        GIT_AUTHOR_EMAIL="author@example.invalid",
        GIT_COMMITTER_NAME="Fixture Author",
        GIT_COMMITTER_EMAIL="author@example.invalid",
        GIT_CONFIG_NOSYSTEM="1",
        HOME=str(repo),
    )
    if date:
        env["GIT_AUTHOR_DATE"] = date
        env["GIT_COMMITTER_DATE"] = date
    out = subprocess.run(
        ["git", "-c", "commit.gpgsign=false", "-c", "init.defaultBranch=main", *args],
        cwd=repo, env=env, check=True, capture_output=True, text=True,
    )
    return out.stdout.strip()


def build(dest: str | Path) -> dict[str, str]:
    """Create the repository at ``dest``; returns tag -> commit id."""
    repo = Path(dest)
    repo.mkdir(parents=True, exist_ok=True)
    _git(repo, "init", "-q")
    ids: dict[str, str] = {}
    for tag, branch, date, message, edits in SCRIPT:
        if tag == "side-1":
            _git(repo, "checkout", "-q", "-b", "side")
        if tag == "merge":
            _git(repo, "checkout", "-q", "main")
            _git(repo, "merge", "-q", "--no-ff", "side", "-m", message, date=date)
        else:
            for path, transform in edits.items():
                target = repo / path
                target.parent.mkdir(parents=True, exist_ok=True)
                old = target.read_text() if target.exists() else ""
                target.write_text(transform(old))
                _git(repo, "add", path)
            _git(repo, "commit", "-q", "-m", message, date=date)
        ids[tag] = _git(repo, "rev-parse", "HEAD")
        _git(repo, "tag", tag)
    return ids


if __name__ == "__main__":
    for tag, sha in build(sys.argv[1]).items():
        print(tag, sha)
