"""Expression language for conditional probability definitions.

Node behaviour in a model file is either a probability table or a source
expression in this small language. An expression evaluates, per parent
configuration, to a number, a state label, or a distribution.

Grammar (EBNF, also published in the package docs):

    expression  = comparison ;
    comparison  = sum , [ cmp-op , sum ] ;
    cmp-op      = ">" | ">=" | "<" | "<=" | "=" ;
    sum         = term , { ("+" | "-") , term } ;
    term        = unary , { ("*" | "/") , unary } ;
    unary       = "-" , unary | atom ;
    atom        = NUMBER | STRING | IDENT | call | "(" , expression , ")"
                | partition ;
    call        = IDENT , "(" , [ expression , { "," , expression } ] , ")" ;
    partition   = "{" , branch , { "," , branch } , "}" ;
    branch      = [ "if" ] , IDENT , "=" , key , ":" , expression ;
    key         = IDENT | NUMBER | STRING ;

    NUMBER      = digits with optional fraction and exponent, e.g. 1.0E-4 ;
    STRING      = double-quoted label, e.g. "True" ;
    IDENT       = letter or "_", then letters, digits or "_" ;

Calls are either the numeric builtins min/max/abs/if or the distribution
constructors Uniform, Normal, TNormal, Gamma, Binomial, Arithmetic. All binary
operators are left-associative; comparisons bind loosest and may only be used
as an `if` condition or as the root of a Boolean node. A partition selects a
sub-expression by the state of one named discrete parent.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .distributions import DistributionSpec, point
from .errors import DistributionError, ExprEvalError, ExprSyntaxError

BUILTINS = ("min", "max", "abs", "if")
FAMILIES = {
    "Uniform": "uniform",
    "Normal": "normal",
    "TNormal": "tnormal",
    "Gamma": "gamma",
    "Binomial": "binomial",
    "Arithmetic": "point",
}
_FAMILY_ARITY = {"Uniform": 2, "Normal": 2, "TNormal": 4, "Gamma": 2, "Binomial": 2, "Arithmetic": 1}
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


# -- abstract syntax ---------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Dist:
    family: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Partition:
    variable: str
    branches: tuple[tuple[str, "Expr"], ...]


Expr = Num | Str | Var | Neg | Bin | Cmp | Call | Dist | Partition


# -- lexer --------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<WS>\s+)
  | (?P<NUMBER>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<STRING>"[^"\n]*")
  | (?P<OP>>=|<=|[-+*/(){},:=><])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        text = m.group(0)
        kind = m.lastgroup or "OP"
        if kind != "WS":
            tokens.append(_Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# -- parser -------------------------------------------------------------------


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text:
            raise ExprSyntaxError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.column)
        return self.advance()

    def fail(self, message: str):
        tok = self.peek()
        raise ExprSyntaxError(message, tok.line, tok.column)

    def parse(self) -> Expr:
        expr = self.comparison()
        tok = self.peek()
        if tok.kind != "EOF":
            raise ExprSyntaxError(f"unexpected trailing input {tok.text!r}", tok.line, tok.column)
        return expr

    def comparison(self) -> Expr:
        left = self.sum()
        tok = self.peek()
        if tok.text in (">", ">=", "<", "<=", "="):
            self.advance()
            right = self.sum()
            return Cmp(tok.text, left, right)
        return left

    def sum(self) -> Expr:
        expr = self.term()
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            expr = Bin(op, expr, self.term())
        return expr

    def term(self) -> Expr:
        expr = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.advance().text
            expr = Bin(op, expr, self.unary())
        return expr

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.advance()
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "STRING":
            self.advance()
            return Str(tok.text[1:-1])
        if tok.text == "(":
            self.advance()
            expr = self.comparison()
            self.expect(")")
            return expr
        if tok.text == "{":
            return self.partition()
        if tok.kind == "IDENT":
            self.advance()
            if self.peek().text == "(":
                return self.call(tok)
            return Var(tok.text)
        self.fail(f"expected an expression, found {tok.text or 'end of input'!r}")

    def call(self, name: _Token) -> Expr:
        self.expect("(")
        args: list[Expr] = []
        if self.peek().text != ")":
            args.append(self.comparison())
            while self.peek().text == ",":
                self.advance()
                args.append(self.comparison())
        self.expect(")")
        if name.text in FAMILIES:
            arity = _FAMILY_ARITY[name.text]
            if len(args) != arity:
                raise ExprSyntaxError(f"{name.text} takes {arity} arguments, got {len(args)}", name.line, name.column)
            return Dist(FAMILIES[name.text], tuple(args))
        if name.text in BUILTINS:
            arity = {"min": 2, "max": 2, "abs": 1, "if": 3}[name.text]
            if len(args) != arity:
                raise ExprSyntaxError(f"{name.text} takes {arity} arguments, got {len(args)}", name.line, name.column)
            return Call(name.text, tuple(args))
        raise ExprSyntaxError(f"unknown function {name.text!r}", name.line, name.column)

    def partition(self) -> Expr:
        opener = self.expect("{")
        branches: list[tuple[str, Expr]] = []
        variable: str | None = None
        while True:
            if self.peek().text == "if":
                self.advance()
            var_tok = self.peek()
            if var_tok.kind != "IDENT":
                self.fail("expected a parent name in partition branch")
            self.advance()
            if variable is None:
                variable = var_tok.text
            elif variable != var_tok.text:
                raise ExprSyntaxError(
                    f"partition mixes parents {variable!r} and {var_tok.text!r}", var_tok.line, var_tok.column
                )
            self.expect("=")
            branches.append((self.partition_key(), self.branch_body()))
            if self.peek().text == ",":
                self.advance()
                continue
            self.expect("}")
            break
        if variable is None:
            raise ExprSyntaxError("empty partition", opener.line, opener.column)
        return Partition(variable, tuple(branches))

    def partition_key(self) -> str:
        tok = self.advance()
        if tok.kind == "IDENT":
            return tok.text
        if tok.kind == "STRING":
            return tok.text[1:-1]
        if tok.kind == "NUMBER":
            return format_number(float(tok.text))
        raise ExprSyntaxError(f"bad partition key {tok.text!r}", tok.line, tok.column)

    def branch_body(self) -> Expr:
        self.expect(":")
        return self.comparison()


def parse_expression(source: str) -> Expr:
    """Parse source text to an AST; raises ExprSyntaxError with position."""
    return _Parser(source).parse()


# -- pretty printer ------------------------------------------------------------

_PREC = {"cmp": 1, "+": 2, "-": 2, "*": 3, "/": 3, "neg": 4, "atom": 5}


def format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _key_text(key: str) -> str:
    if _IDENT_RE.match(key) or re.match(r"-?\d+(\.\d+)?([eE][+-]?\d+)?\Z", key):
        return key
    return f'"{key}"'


def print_expression(expr: Expr) -> str:
    """Render an AST back to canonical source text; parse round-trips."""
    return _print(expr, 0)


def _print(expr: Expr, context: int) -> str:
    if isinstance(expr, Num):
        return format_number(expr.value)
    if isinstance(expr, Str):
        return f'"{expr.value}"'
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        inner = _print(expr.operand, _PREC["neg"])
        text = f"-{inner}"
        return f"({text})" if context > _PREC["neg"] else text
    if isinstance(expr, Bin):
        prec = _PREC[expr.op]
        left = _print(expr.left, prec)
        right = _print(expr.right, prec + 1)
        text = f"{left} {expr.op} {right}"
        return f"({text})" if context > prec else text
    if isinstance(expr, Cmp):
        prec = _PREC["cmp"]
        text = f"{_print(expr.left, prec + 1)} {expr.op} {_print(expr.right, prec + 1)}"
        return f"({text})" if context > prec else text
    if isinstance(expr, Call):
        inner = ", ".join(_print(a, 0) for a in expr.args)
        return f"{expr.fn}({inner})"
    if isinstance(expr, Dist):
        name = next(k for k, v in FAMILIES.items() if v == expr.family)
        inner = ", ".join(_print(a, 0) for a in expr.args)
        return f"{name}({inner})"
    if isinstance(expr, Partition):
        body = ", ".join(f"{expr.variable} = {_key_text(k)}: {_print(e, 0)}" for k, e in expr.branches)
        return "{" + body + "}"
    raise AssertionError(type(expr))


# -- static checks --------------------------------------------------------------


def referenced_variables(expr: Expr) -> frozenset[str]:
    if isinstance(expr, (Num, Str)):
        return frozenset()
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Neg):
        return referenced_variables(expr.operand)
    if isinstance(expr, (Bin, Cmp)):
        return referenced_variables(expr.left) | referenced_variables(expr.right)
    if isinstance(expr, (Call, Dist)):
        out: frozenset[str] = frozenset()
        for a in expr.args:
            out |= referenced_variables(a)
        return out
    if isinstance(expr, Partition):
        out = frozenset((expr.variable,))
        for _, e in expr.branches:
            out |= referenced_variables(e)
        return out
    raise AssertionError(type(expr))


def check_expression(expr: Expr, allowed: frozenset[str]) -> list[str]:
    """Return placement problems: bad references, misplaced comparisons or
    constructors. Distribution constructors may appear only at the root, as a
    partition branch body, or as an `if` branch; comparisons only as an `if`
    condition or as the root of a Boolean definition."""
    problems: list[str] = []
    unknown = referenced_variables(expr) - allowed
    if unknown:
        problems.append("unknown variables: " + ", ".join(sorted(unknown)))
    problems.extend(_check_placement(expr, root_position=True))
    return problems


def _check_placement(expr: Expr, root_position: bool) -> list[str]:
    problems: list[str] = []
    if isinstance(expr, (Num, Str, Var)):
        return problems
    if isinstance(expr, Neg):
        return _check_placement(expr.operand, False)
    if isinstance(expr, Bin):
        for side in (expr.left, expr.right):
            if isinstance(side, (Cmp, Dist, Partition)):
                problems.append(f"{type(side).__name__.lower()} used as an arithmetic operand")
            problems.extend(_check_placement(side, False))
        return problems
    if isinstance(expr, Cmp):
        if not root_position:
            problems.append("comparison outside an if condition or Boolean root")
        for side in (expr.left, expr.right):
            if isinstance(side, (Cmp, Dist, Partition)):
                problems.append(f"{type(side).__name__.lower()} used inside a comparison")
            problems.extend(_check_placement(side, False))
        return problems
    if isinstance(expr, Call):
        if expr.fn == "if":
            cond, then, other = expr.args
            if not isinstance(cond, Cmp):
                problems.append("if condition must be a comparison")
            else:
                problems.extend(_check_placement(cond, True))
            for branch in (then, other):
                problems.extend(_check_placement(branch, root_position))
        else:
            for a in expr.args:
                if isinstance(a, (Cmp, Dist, Partition)):
                    problems.append(f"{type(a).__name__.lower()} used as a {expr.fn} argument")
                problems.extend(_check_placement(a, False))
        return problems
    if isinstance(expr, Dist):
        if not root_position:
            problems.append("distribution constructor used in a value position")
        for a in expr.args:
            if isinstance(a, (Cmp, Dist, Partition)):
                problems.append(f"{type(a).__name__.lower()} used as a distribution parameter")
            problems.extend(_check_placement(a, False))
        return problems
    if isinstance(expr, Partition):
        if not root_position:
            problems.append("partition used in a value position")
        for _, e in expr.branches:
            problems.extend(_check_placement(e, root_position))
        return problems
    raise AssertionError(type(expr))


# -- evaluation -----------------------------------------------------------------


@dataclass(frozen=True)
class StateBinding:
    """A discrete parent bound to a state: label plus optional numeric value."""

    label: str
    value: float | None = None


Value = float | str | bool | StateBinding


def evaluate_deterministic(expr: Expr, env: dict[str, Value]) -> Value:
    """Evaluate an expression with fully-bound numeric or label environment.

    Numeric results are floats; `if` may yield state labels; comparisons yield
    booleans. Unbound variables and division by zero raise ExprEvalError.
    """
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Str):
        return expr.value
    if isinstance(expr, Var):
        if expr.name not in env:
            raise ExprEvalError(f"unbound variable {expr.name!r}")
        return env[expr.name]
    if isinstance(expr, Neg):
        return -_number(evaluate_deterministic(expr.operand, env), "unary minus")
    if isinstance(expr, Bin):
        left = _number(evaluate_deterministic(expr.left, env), expr.op)
        right = _number(evaluate_deterministic(expr.right, env), expr.op)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if right == 0.0:
            raise ExprEvalError(f"division by zero: {print_expression(expr)}")
        return left / right
    if isinstance(expr, Cmp):
        left = evaluate_deterministic(expr.left, env)
        right = evaluate_deterministic(expr.right, env)
        if _is_label(left) or _is_label(right):
            if expr.op != "=":
                raise ExprEvalError(f"labels only support '=' comparison, not {expr.op!r}")
            return _label(left) == _label(right)
        lnum, rnum = _number(left, expr.op), _number(right, expr.op)
        return {
            ">": lnum > rnum,
            ">=": lnum >= rnum,
            "<": lnum < rnum,
            "<=": lnum <= rnum,
            "=": lnum == rnum,
        }[expr.op]
    if isinstance(expr, Call):
        if expr.fn == "if":
            cond = evaluate_deterministic(expr.args[0], env)
            if not isinstance(cond, bool):
                raise ExprEvalError("if condition did not evaluate to a truth value")
            return evaluate_deterministic(expr.args[1] if cond else expr.args[2], env)
        values = [_number(evaluate_deterministic(a, env), expr.fn) for a in expr.args]
        if expr.fn == "min":
            return min(values)
        if expr.fn == "max":
            return max(values)
        return abs(values[0])
    if isinstance(expr, Dist):
        if expr.family == "point":
            return evaluate_deterministic(expr.args[0], env)
        raise ExprEvalError(f"distribution constructor {expr.family!r} in a deterministic context")
    if isinstance(expr, Partition):
        return evaluate_deterministic(_select_branch(expr, env), env)
    raise AssertionError(type(expr))


def evaluate_distribution(expr: Expr, env: dict[str, Value]) -> DistributionSpec:
    """Resolve an expression to a DistributionSpec under one configuration.

    Constructor parameters are evaluated deterministically; Arithmetic and
    plain deterministic roots become point masses. Invalid parameters raise
    DistributionError; a state-label result raises ExprEvalError (labels are
    resolved by the discrete table builder instead).
    """
    if isinstance(expr, Dist):
        if expr.family == "point":
            return point(_number(evaluate_deterministic(expr.args[0], env), "Arithmetic"))
        params = tuple(_number(evaluate_deterministic(a, env), expr.family) for a in expr.args)
        try:
            return DistributionSpec(expr.family, params)
        except DistributionError as exc:
            raise DistributionError(f"{print_expression(expr)}: {exc}") from exc
    if isinstance(expr, Partition):
        return evaluate_distribution(_select_branch(expr, env), env)
    if isinstance(expr, Call) and expr.fn == "if":
        cond = evaluate_deterministic(expr.args[0], env)
        if not isinstance(cond, bool):
            raise ExprEvalError("if condition did not evaluate to a truth value")
        return evaluate_distribution(expr.args[1] if cond else expr.args[2], env)
    value = evaluate_deterministic(expr, env)
    if isinstance(value, str):
        raise ExprEvalError(f"expression yields state label {value!r}, not a distribution")
    return point(_number(value, "expression"))


def _select_branch(expr: Partition, env: dict[str, Value]) -> Expr:
    if expr.variable not in env:
        raise ExprEvalError(f"unbound variable {expr.variable!r}")
    actual = env[expr.variable]
    label = actual.label if isinstance(actual, StateBinding) else (actual if isinstance(actual, str) else None)
    number: float | None
    if isinstance(actual, StateBinding):
        number = actual.value
    elif isinstance(actual, (int, float)) and not isinstance(actual, bool):
        number = float(actual)
    else:
        number = None
    for key, body in expr.branches:
        if label is not None and key == label:
            return body
        if number is not None:
            try:
                if abs(float(key) - number) <= 1e-9:
                    return body
            except ValueError:
                pass
    raise ExprEvalError(f"partition has no branch for {expr.variable} = {label or number!r}")


def _is_label(value: Value) -> bool:
    return isinstance(value, str) or (isinstance(value, StateBinding) and value.value is None)


def _label(value: Value) -> str:
    if isinstance(value, StateBinding):
        return value.label
    return str(value)


def _number(value: Value, where: str) -> float:
    if isinstance(value, StateBinding):
        if value.value is None:
            raise ExprEvalError(f"{where} expected a number, state {value.label!r} has no numeric value")
        return value.value
    if isinstance(value, bool) or isinstance(value, str):
        raise ExprEvalError(f"{where} expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ExprEvalError(f"{where} produced a non-finite value")
    return float(value)
