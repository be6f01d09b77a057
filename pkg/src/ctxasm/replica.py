"""Deterministic construction of the replicated evaluation corpus.

The original corpus pairs hand-written English intents with IA-32
assembly drawn from 20 real shellcode programs; it is not redistributable
here, so this module synthesizes a stand-in with the same shape: 2,167
samples across 20 programs with the published per-category counts
{963, 360, 238, 303, 303}, multi-line snippets, and value/label/string
tokens that exercise the standardization classes.  Program sizes follow
the relative complexity of the source programs.  Everything derives from
a single seed, so the same seed always yields byte-identical corpora.

A hand-written 20-sample toy corpus for end-to-end smoke tests lives here
too.
"""

from __future__ import annotations

from random import Random

from .corpus import CATEGORY_ORDER, ContextCategory, Corpus, Sample, build_corpus

DEFAULT_REPLICA_SEED = 20167

REPLICA_CATEGORY_COUNTS: dict[ContextCategory, int] = {
    ContextCategory.NO_CONTEXT: 963,
    ContextCategory.CTX_2TO1: 360,
    ContextCategory.CTX_3TO1: 238,
    ContextCategory.UNN_2TO1: 303,
    ContextCategory.UNN_3TO1: 303,
}

REPLICA_TOTAL = 2167

# Relative line counts of the 20 source shellcode programs.
_PROGRAM_WEIGHTS = (17, 32, 27, 22, 16, 16, 32, 23, 24, 19, 29, 46, 27, 18, 42, 19, 33, 17, 24, 45)

_REG32 = ("eax", "ebx", "ecx", "edx", "esi", "edi", "ebp")
_REG8 = ("al", "bl", "cl", "dl")
_LABELS = (
    "decode",
    "encoder",
    "shell",
    "switch",
    "found",
    "loop_start",
    "recv_http_request",
    "done",
    "exit_routine",
    "read_loop",
)
_STRINGS = ("'//sh'", "'/bin'", "'.tmp'", "'AAAA'", "'KEY!'")


def _dec(rng: Random) -> str:
    return str(rng.randrange(1, 256))


def _hex(rng: Random) -> str:
    return f"0x{rng.randrange(1, 0xFFFF):x}"


def _value(rng: Random) -> str:
    return _dec(rng) if rng.random() < 0.5 else _hex(rng)


def _t_mov_imm(rng: Random) -> tuple[str, str]:
    r, v = rng.choice(_REG32), _value(rng)
    intent = rng.choice(
        (
            f"move {v} into the {r} register",
            f"set {r} to the value {v}",
            f"put the value {v} in {r}",
        )
    )
    return intent, f"mov {r}, {v}"


def _t_mov_reg(rng: Random) -> tuple[str, str]:
    r1, r2 = rng.sample(_REG32, 2)
    return f"move {r2} in {r1}", f"mov {r1}, {r2}"


def _t_clear(rng: Random) -> tuple[str, str]:
    r = rng.choice(_REG32)
    return f"clear the {r} register", f"xor {r}, {r}"


def _t_inc(rng: Random) -> tuple[str, str]:
    r = rng.choice(_REG32)
    return f"increment the {r} register", f"inc {r}"


def _t_dec(rng: Random) -> tuple[str, str]:
    r = rng.choice(_REG32)
    return f"decrement the contents of {r}", f"dec {r}"


def _t_push_imm(rng: Random) -> tuple[str, str]:
    v = _value(rng)
    return f"push {v} onto the stack", f"push {v}"


def _t_push_str(rng: Random) -> tuple[str, str]:
    q = rng.choice(_STRINGS)
    return f"push the string {q} onto the stack", f"push {q}"


def _t_pop(rng: Random) -> tuple[str, str]:
    r = rng.choice(_REG32)
    return f"pop the top of the stack into {r}", f"pop {r}"


def _t_sub_mem(rng: Random) -> tuple[str, str]:
    r, v = rng.choice(("esi", "edi")), _dec(rng)
    return f"subtract {v} from the current byte in {r}", f"sub byte [{r}], {v}"


def _t_add(rng: Random) -> tuple[str, str]:
    r, v = rng.choice(_REG32 + _REG8), _dec(rng)
    return f"add {v} to the {r} register", f"add {r}, {v}"


def _t_not(rng: Random) -> tuple[str, str]:
    r = rng.choice(_REG32)
    return f"negate the contents of {r}", f"not {r}"


def _t_shift(rng: Random) -> tuple[str, str]:
    r, v = rng.choice(_REG32), rng.choice(("1", "2", "4", "8", "16"))
    direction, op = rng.choice((("right", "shr"), ("left", "shl")))
    return f"shift the {r} register {direction} by {v} bits", f"{op} {r}, {v}"


def _t_and(rng: Random) -> tuple[str, str]:
    r, v = rng.choice(_REG32), _hex(rng)
    return f"perform a bitwise and between {r} and {v}", f"and {r}, {v}"


def _t_xor_imm(rng: Random) -> tuple[str, str]:
    r, v = rng.choice(_REG32), _hex(rng)
    return f"xor the {r} register with the key {v}", f"xor {r}, {v}"


def _t_int(rng: Random) -> tuple[str, str]:
    return "invoke the kernel by triggering interrupt 0x80", "int 0x80"


def _t_label(rng: Random) -> tuple[str, str]:
    lbl = rng.choice(_LABELS)
    return f"define the {lbl} label", f"{lbl}:"


def _t_lea(rng: Random) -> tuple[str, str]:
    r, lbl = rng.choice(_REG32), rng.choice(_LABELS)
    return f"load the effective address of the label {lbl} into {r}", f"lea {r}, [{lbl}]"


def _t_call(rng: Random) -> tuple[str, str]:
    lbl = rng.choice(_LABELS)
    return f"call the subroutine at the label {lbl}", f"call {lbl}"


def _t_jmp_short(rng: Random) -> tuple[str, str]:
    lbl = rng.choice(_LABELS)
    return f"jump short to the label {lbl}", f"jmp short {lbl}"


def _t_xchg(rng: Random) -> tuple[str, str]:
    r1, r2 = rng.sample(_REG32, 2)
    return f"exchange the contents of {r1} and {r2}", f"xchg {r1}, {r2}"


def _t_mov_mem(rng: Random) -> tuple[str, str]:
    r1, r2 = rng.sample(_REG32, 2)
    return f"move {r2} into the memory location pointed by {r1}", f"mov [{r1}], {r2}"


def _t_cmp_je(rng: Random) -> tuple[str, str]:
    r, v, lbl = rng.choice(_REG8), _hex(rng), rng.choice(_LABELS)
    intent = f"compare {r} with the byte {v} and jump to the label {lbl} if equal"
    return intent, f"cmp {r}, {v}\nje {lbl}"


def _t_loop(rng: Random) -> tuple[str, str]:
    r, lbl = rng.choice(_REG32), rng.choice(_LABELS)
    intent = f"decrement {r} and jump to the label {lbl} if the result is not zero"
    return intent, f"dec {r}\njnz {lbl}"


def _t_test_jnz_sub(rng: Random) -> tuple[str, str]:
    r, lbl = rng.choice(_REG32), rng.choice(_LABELS)
    r2, v = rng.choice(_REG32), _hex(rng)
    intent = (
        f"jump to the label {lbl} if the contents of the {r} register is not zero "
        f"else subtract the value {v} from the contents of the {r2} register"
    )
    return intent, f"test {r}, {r}\njnz {lbl}\nsub {r2}, {v}"


def _t_exit_call(rng: Random) -> tuple[str, str]:
    v = _dec(rng)
    intent = f"clear eax and invoke the exit system call with status {v}"
    return intent, f"xor eax, eax\nmov al, 1\nmov bl, {v}\nint 0x80"


_TEMPLATES = (
    _t_mov_imm,
    _t_mov_reg,
    _t_clear,
    _t_inc,
    _t_dec,
    _t_push_imm,
    _t_push_str,
    _t_pop,
    _t_sub_mem,
    _t_add,
    _t_not,
    _t_shift,
    _t_and,
    _t_xor_imm,
    _t_int,
    _t_label,
    _t_lea,
    _t_call,
    _t_jmp_short,
    _t_xchg,
    _t_mov_mem,
    _t_cmp_je,
    _t_loop,
    _t_test_jnz_sub,
    _t_exit_call,
)


def _make_pair(rng: Random) -> tuple[str, str]:
    return rng.choice(_TEMPLATES)(rng)


def _distractor_intent(rng: Random) -> str:
    intent, _ = _make_pair(rng)
    return intent


def _largest_remainder(weights: tuple[int, ...], total: int) -> list[int]:
    weight_sum = sum(weights)
    shares = [w * total / weight_sum for w in weights]
    counts = [int(s) for s in shares]
    leftovers = sorted(
        range(len(weights)), key=lambda i: (counts[i] - shares[i], i)
    )
    for i in leftovers[: total - sum(counts)]:
        counts[i] += 1
    return counts


def _draw_category(rng: Random, pool: dict[ContextCategory, int]) -> ContextCategory:
    total = sum(pool.values())
    pick = rng.randrange(total)
    acc = 0
    for category in CATEGORY_ORDER:
        acc += pool[category]
        if pick < acc:
            pool[category] -= 1
            return category
    raise AssertionError("category pool exhausted")


def make_replica_corpus(seed: int = DEFAULT_REPLICA_SEED) -> Corpus:
    """Build the full 2,167-sample replicated corpus."""
    rng = Random(f"replica:{seed}")
    sizes = _largest_remainder(_PROGRAM_WEIGHTS, REPLICA_TOTAL)

    pool = dict(REPLICA_CATEGORY_COUNTS)
    # The first two lines of every program are reserved for no-context
    # samples so 2to1/3to1 context always has real predecessors.
    pool[ContextCategory.NO_CONTEXT] -= 2 * len(sizes)

    samples: list[Sample] = []
    for prog_no, size in enumerate(sizes, start=1):
        program_id = f"prog{prog_no:02d}"
        categories = [ContextCategory.NO_CONTEXT, ContextCategory.NO_CONTEXT]
        categories += [_draw_category(rng, pool) for _ in range(size - 2)]

        intents: list[str] = []
        for line_idx, category in enumerate(categories):
            intent, snippet = _make_pair(rng)
            if category is ContextCategory.CTX_2TO1:
                context = (intents[line_idx - 1],)
            elif category is ContextCategory.CTX_3TO1:
                context = (intents[line_idx - 2], intents[line_idx - 1])
            elif category is ContextCategory.UNN_2TO1:
                context = (_distractor_intent(rng),)
            elif category is ContextCategory.UNN_3TO1:
                context = (_distractor_intent(rng), _distractor_intent(rng))
            else:
                context = ()
            intents.append(intent)
            samples.append(
                Sample(
                    id=f"{program_id}_{line_idx + 1:03d}",
                    program_id=program_id,
                    line_no=line_idx + 1,
                    intent=intent,
                    snippet=snippet,
                    category=category,
                    context_intents=context,
                )
            )

    assert len(samples) == REPLICA_TOTAL
    assert all(v == 0 for v in pool.values())
    return build_corpus(samples)


_TOY_ROWS: tuple[tuple[str, str, str, tuple[str, ...]], ...] = (
    ("no_context", "clear the eax register", "xor eax, eax", ()),
    ("no_context", "move the value 22 into the lower byte of eax", "mov al, 22", ()),
    ("no_context", "negate the contents of esi", "not esi", ()),
    ("no_context", "push the string '//sh' onto the stack", "push '//sh'", ()),
    ("no_context", "increment the edi register", "inc edi", ()),
    ("no_context", "subtract 8 from the current byte in esi", "sub byte [esi], 8", ()),
    ("no_context", "perform a bitwise and between ecx and 0xff", "and ecx, 0xff", ()),
    ("no_context", "jump short to the label encoder", "jmp short encoder", ()),
    ("ctx_2to1", "move 22 into the lower byte", "mov al, 22", ("clear the eax register",)),
    ("ctx_2to1", "increment it", "inc eax", ("move esi in eax",)),
    ("ctx_2to1", "pop it into eax", "pop eax", ("push the value 0x0b onto the stack",)),
    ("ctx_2to1", "move 5 into its lower byte", "mov bl, 5", ("zero out the ebx register",)),
    (
        "ctx_3to1",
        "move eax in it",
        "mov byte [esi], eax",
        ("subtract 8 from the current byte in esi", "negate the result"),
    ),
    (
        "ctx_3to1",
        "add the result to eax",
        "add eax, edx",
        ("move eax to edx", "right shift the register by 16 bits"),
    ),
    (
        "unn_2to1",
        "subtract 8 from the current byte of the shellcode",
        "sub byte [esi], 8",
        ("define the decode label",),
    ),
    ("unn_2to1", "add 3 to al", "add al, 3", ("increment edi",)),
    ("unn_2to1", "jump short to switch", "jmp short switch", ("move 22 into the lower byte",)),
    (
        "unn_3to1",
        "jump to the label recv_http_request",
        "jmp recv_http_request",
        ("increment edi", "add 3 to al"),
    ),
    (
        "unn_3to1",
        "store the doubleword 0x68732f2f on the stack",
        "push 0x68732f2f",
        ("define the decode label", "clear the eax register"),
    ),
    (
        "unn_3to1",
        "compare dl with the byte 0x41 and jump to the label found if equal",
        "cmp dl, 0x41\nje found",
        ("negate the contents of esi", "push the string '//sh' onto the stack"),
    ),
)


def make_toy_corpus() -> Corpus:
    """20 hand-written samples with pairwise-distinct inputs, covering all
    five categories and a multi-line snippet; used by the smoke tests."""
    samples = [
        Sample(
            id=f"toy_{i:02d}",
            program_id="toy01",
            line_no=i,
            intent=intent,
            snippet=snippet,
            category=ContextCategory(category),
            context_intents=context,
        )
        for i, (category, intent, snippet, context) in enumerate(_TOY_ROWS, start=1)
    ]
    return build_corpus(samples)
