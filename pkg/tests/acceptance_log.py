"""Verdict registry for the acceptance suite; printed once at the end of the session."""
CRITERIA = range(1, 12)
VERDICTS = {}


def verdict(number, ok, detail):
    """Record and print one pass/fail line, then fail the calling test if needed."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[number] = line
    print(line)
    assert ok, line
