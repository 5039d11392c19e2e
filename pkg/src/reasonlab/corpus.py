"""A small built-in corpus of subject-language programs with test inputs.

Used by the test suite, the acceptance checks and ``reasonlab demo-dataset``.
Expected outputs are not stored: they come from the reference interpreter
when a dataset is materialised.
"""

from __future__ import annotations

import textwrap
from dataclasses import dataclass
from typing import Any, Sequence

from .lang import parse, run_program
from .lang.values import render_value


@dataclass(frozen=True)
class CorpusProgram:
    name: str
    entry: str
    source: str
    inputs: tuple[tuple[Any, ...], ...]


def _p(name: str, source: str, *inputs: Sequence[Any], entry: str | None = None) -> CorpusProgram:
    return CorpusProgram(name, entry or name, textwrap.dedent(source).lstrip("\n"), tuple(tuple(i) for i in inputs))


SPECIAL_FILTER = _p(
    "specialFilter",
    """
    def specialFilter(nums):
        count = 0
        for num in nums:
            if num > 10:
                digits = str(abs(num))
                first = int(digits[0])
                last = int(digits[-1])
                if first % 2 == 1 and last % 2 == 1:
                    count += 1
        return count
    """,
    [[71, -2, -33, 75, 21, 19]],
    [[15, -73, 14, -15]],
    [[33, -2, -3, 45, 21, 109]],
    [[43, -12, 93, 125, 121, 109]],
    [[]],
)

MIN_SUB_ARRAY_SUM = _p(
    "minSubArraySum",
    """
    def minSubArraySum(nums):
        min_sum = float('inf')
        cur_sum = 0
        for num in nums:
            cur_sum = min(num, cur_sum + num)
            if cur_sum < min_sum:
                min_sum = cur_sum
        return min_sum
    """,
    [[100, -33, 32, -1, 0, -2]],
    [[2, 3, 4, 1, 2, 4]],
    [[-1, -2, -3]],
    [[7]],
)

INCR_LIST = _p(
    "incr_list",
    """
    def incr_list(numbers):
        values = [num + 1 for num in numbers]
        return values
    """,
    [[1, 2, 2, 1]],
    [[]],
    [[5, 3, 5, 2, 3, 3, 9, 0, 123]],
)

PROGRAMS: tuple[CorpusProgram, ...] = (
    SPECIAL_FILTER,
    MIN_SUB_ARRAY_SUM,
    INCR_LIST,
    _p(
        "sum_evens",
        """
        def sum_evens(xs):
            total = 0
            for x in xs:
                if x % 2 == 0:
                    total += x
            return total
        """,
        [[1, 2, 3, 4]], [[]], [[-2, -3, 10]],
    ),
    _p(
        "count_vowels",
        """
        def count_vowels(s):
            n = 0
            for ch in s:
                if ch == 'a' or ch == 'e' or ch == 'i' or ch == 'o' or ch == 'u':
                    n += 1
            return n
        """,
        ["education"], [""], ["rhythm"],
    ),
    _p(
        "fizz_tally",
        """
        def fizz_tally(n):
            fizz = 0
            buzz = 0
            both = 0
            for i in range(1, n + 1):
                if i % 15 == 0:
                    both += 1
                elif i % 3 == 0:
                    fizz += 1
                elif i % 5 == 0:
                    buzz += 1
                else:
                    pass
            return [fizz, buzz, both]
        """,
        [15], [1], [31],
    ),
    _p(
        "gcd",
        """
        def gcd(a, b):
            while b != 0:
                t = b
                b = a % b
                a = t
            return a
        """,
        [48, 18], [7, 0], [17, 5],
    ),
    _p(
        "is_prime",
        """
        def is_prime(n):
            if n < 2:
                return False
            i = 2
            while i * i <= n:
                if n % i == 0:
                    return False
                i += 1
            return True
        """,
        [1], [2], [97], [91],
    ),
    _p(
        "fib",
        """
        def fib(n):
            a = 0
            b = 1
            for _ in range(n):
                t = a + b
                a = b
                b = t
            return a
        """,
        [0], [1], [10],
    ),
    _p(
        "reverse_list",
        """
        def reverse_list(xs):
            out = []
            i = len(xs) - 1
            while i >= 0:
                out.append(xs[i])
                i -= 1
            return out
        """,
        [[1, 2, 3]], [[]], [["a", "b"]],
    ),
    _p(
        "longest_run",
        """
        def longest_run(xs):
            if len(xs) == 0:
                return 0
            best = 1
            run = 1
            for i in range(1, len(xs)):
                if xs[i] == xs[i - 1]:
                    run += 1
                    if run > best:
                        best = run
                else:
                    run = 1
            return best
        """,
        [[1, 1, 2, 2, 2, 3]], [[]], [[4]], [[5, 6, 6]],
    ),
    _p(
        "below_zero",
        """
        def below_zero(operations):
            balance = 0
            for op in operations:
                balance += op
                if balance < 0:
                    return True
            return False
        """,
        [[1, 2, -3, 1, 2, -3]], [[1, 2, -4, 5, 6]], [[]],
    ),
    _p(
        "first_negative",
        """
        def first_negative(xs):
            index = -1
            for i in range(len(xs)):
                if xs[i] < 0:
                    index = i
                    break
            return index
        """,
        [[3, 1, -4, -1]], [[2, 7]], [[-9]],
    ),
    _p(
        "sum_skipping",
        """
        def sum_skipping(n, k):
            total = 0
            for i in range(n):
                if i % k == 0:
                    continue
                total += i
            return total
        """,
        [10, 3], [5, 1], [0, 2],
    ),
    _p(
        "bubble_sort",
        """
        def bubble_sort(xs):
            arr = xs[:]
            n = len(arr)
            for i in range(n):
                for j in range(n - 1 - i):
                    if arr[j] > arr[j + 1]:
                        tmp = arr[j]
                        arr[j] = arr[j + 1]
                        arr[j + 1] = tmp
            return arr
        """,
        [[3, 1, 2]], [[]], [[5, -1, 5, 0]],
    ),
    _p(
        "digit_sum",
        """
        def digit_sum(n):
            s = 0
            n = abs(n)
            while n > 0:
                s += n % 10
                n //= 10
            return s
        """,
        [1234], [0], [-907],
    ),
    _p(
        "odd_squares",
        """
        def odd_squares(xs):
            return [x * x for x in xs if x % 2 == 1]
        """,
        [[1, 2, 3, 4, 5]], [[]], [[-3, 8]],
    ),
    _p(
        "sum_of_squares",
        """
        def square(x):
            return x * x


        def sum_of_squares(xs):
            total = 0
            for x in xs:
                total += square(x)
            return total
        """,
        [[1, 2, 3]], [[]], [[-4]],
    ),
    _p(
        "snake_case",
        """
        def snake_case(s):
            result = ''
            for ch in s:
                if ch == ' ':
                    result = result + '_'
                else:
                    result = result + ch
            return result
        """,
        ["hello big world"], [""], ["x"],
    ),
    _p(
        "mean_abs_dev",
        """
        def mean_abs_dev(xs):
            mean = sum(xs) / len(xs)
            total = 0.0
            for x in xs:
                total += abs(x - mean)
            return total / len(xs)
        """,
        [[1.0, 2.0, 3.0, 4.0]], [[5]], [[0.1, 0.2, 0.3]],
    ),
    _p(
        "triangle_area",
        """
        def triangle_area(a, b, c):
            if a + b <= c or a + c <= b or b + c <= a:
                return -1.0
            s = (a + b + c) / 2
            area = (s * (s - a) * (s - b) * (s - c)) ** 0.5
            return area
        """,
        [3, 4, 5], [1, 2, 10], [2.5, 2.5, 2.5],
    ),
    _p(
        "letter_grade",
        """
        def letter_grade(score):
            if score >= 90:
                grade = 'A'
            elif score >= 80:
                grade = 'B'
            elif score >= 70:
                grade = 'C'
            else:
                grade = 'F'
            return grade
        """,
        [95], [85], [72], [10],
    ),
    _p(
        "running_max",
        """
        def running_max(xs):
            out = []
            current = float('-inf')
            for x in xs:
                if x > current:
                    current = x
                out.append(current)
            return out
        """,
        [[1, 3, 2, 5, 4]], [[]], [[-1, -2]],
    ),
    _p(
        "pair_sum",
        """
        def pair_sum(xs, target):
            for i in range(len(xs)):
                for j in range(i + 1, len(xs)):
                    if xs[i] + xs[j] == target:
                        return True
            return False
        """,
        [[1, 3, 5, 0], 8], [[1, 2], 4], [[], 0],
    ),
    _p(
        "largest_divisor",
        """
        def largest_divisor(n):
            for i in range(n - 1, 0, -1):
                if n % i == 0:
                    return i
            return 1
        """,
        [15], [2], [49],
    ),
    _p(
        "prod_signs",
        """
        def prod_signs(arr):
            if len(arr) == 0:
                return None
            sign = 1
            total = 0
            for x in arr:
                if x == 0:
                    sign = 0
                elif x < 0:
                    sign = -sign
                total += abs(x)
            return sign * total
        """,
        [[1, 2, 2, -4]], [[0, 1]], [[]],
    ),
    _p(
        "diag_sum",
        """
        def diag_sum(m):
            total = 0
            for i in range(len(m)):
                total += m[i][i]
            return total
        """,
        [[[1, 2], [3, 4]]], [[]], [[[5]]],
    ),
    _p(
        "collatz_steps",
        """
        def collatz_steps(n):
            steps = 0
            while n != 1:
                if n % 2 == 0:
                    n = n // 2
                else:
                    n = 3 * n + 1
                steps += 1
            return steps
        """,
        [1], [6], [27],
    ),
    _p(
        "pluck_even",
        """
        def pluck_even(arr):
            best = -1
            index = -1
            for i in range(len(arr)):
                if arr[i] % 2 == 0:
                    if best == -1 or arr[i] < best:
                        best = arr[i]
                        index = i
            if index == -1:
                return []
            return [best, index]
        """,
        [[4, 2, 3]], [[1, 3]], [[5, 0, 3, 0, 4, 2]],
    ),
    _p(
        "dedupe",
        """
        def contains(xs, v):
            for x in xs:
                if x == v:
                    return True
            return False


        def dedupe(xs):
            seen = []
            for x in xs:
                if not contains(seen, x):
                    seen.append(x)
            return seen
        """,
        [[1, 2, 1, 3, 2]], [[]], [["a", "a"]],
    ),
    _p(
        "rotate",
        """
        def rotate(xs, k):
            if len(xs) == 0:
                return xs
            k = k % len(xs)
            return xs[k:] + xs[:k]
        """,
        [[1, 2, 3, 4], 1], [[], 3], [[7, 8], 5],
    ),
    _p(
        "next_power_of_two",
        """
        def next_power_of_two(n):
            p = 1
            while True:
                if p >= n:
                    break
                p *= 2
            return p
        """,
        [1], [5], [64],
    ),
    _p(
        "count_upper_even",
        """
        def count_upper_even(s):
            count = 0
            i = 0
            while i < len(s):
                if s[i] == 'A' or s[i] == 'E' or s[i] == 'I' or s[i] == 'O' or s[i] == 'U':
                    count += 1
                i += 2
            return count
        """,
        ["aBCdEf"], ["abcdefg"], ["EEEE"],
    ),
    _p(
        "safe_ratio",
        """
        def safe_ratio(a, b):
            if b == 0:
                return float('inf')
            return a / b
        """,
        [1, 0], [7, 2], [-3, 4],
    ),
    _p(
        "scale_in_place",
        """
        def scale_in_place(xs, k):
            ys = xs
            for i in range(len(ys)):
                ys[i] = ys[i] * k
            return xs
        """,
        [[1, 2, 3], 2], [[], 5], [[-1], 0],
    ),
    _p(
        "word_lengths",
        """
        def word_lengths(s):
            lengths = []
            current = 0
            for ch in s + ' ':
                if ch == ' ':
                    if current > 0:
                        lengths.append(current)
                    current = 0
                else:
                    current += 1
            return lengths
        """,
        ["the quick  fox"], [""], ["a"],
    ),
)


def by_name(name: str) -> CorpusProgram:
    for p in PROGRAMS:
        if p.name == name:
            return p
    raise KeyError(name)


def dataset_records(origins: Sequence[str] = ("human",), variants: bool = True) -> list[dict[str, Any]]:
    """Dataset lines for the corpus, one instance per program.

    Origins beyond the first receive a re-rendered, renamed copy of the
    program, standing in for an equivalent solution written by someone else.
    """
    from .mutator import mutate_deterministic

    records = []
    for prog in PROGRAMS:
        unit = parse(prog.source)
        solutions: dict[str, str] = {}
        for k, origin in enumerate(origins):
            if k == 0 or not variants:
                solutions[origin] = prog.source
            else:
                solutions[origin] = mutate_deterministic(unit, "rename_vars", seed=k).text
        tests = []
        for args in prog.inputs:
            out = run_program(unit, prog.entry, list(args))
            tests.append({"args": [render_value(a) for a in args], "expected": render_value(out.output)})
        records.append({"id": prog.name, "entry_point": prog.entry, "solutions": solutions, "tests": tests})
    return records


