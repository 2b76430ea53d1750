"""Independent oracle for the three-loop cube benchmark (benchmarks/fig1.fpi).

Deliberately does NOT import the package: plain Python loops mirroring the
source text, used once to freeze expected values into the test suite.

  loop1: A[0] = 6;        A[t] = A[t-1] + 6
  loop2: B[0] = 1;        B[t] = B[t-1] + A[t-1]
  loop3: C[0] = 0;        C[t] = C[t-1] + B[t-1]

Run directly to print the values for a few sizes.
"""


def cube_chain(n: int):
    A = [0] * n
    B = [0] * n
    C = [0] * n
    for t in range(n):
        A[t] = 6 if t == 0 else A[t - 1] + 6
    for t in range(n):
        B[t] = 1 if t == 0 else B[t - 1] + A[t - 1]
    for t in range(n):
        C[t] = 0 if t == 0 else C[t - 1] + B[t - 1]
    return A, B, C


if __name__ == "__main__":
    for n in (1, 2, 3, 4, 5, 6):
        A, B, C = cube_chain(n)
        cubes = [i * i * i for i in range(n)]
        assert C == cubes, (n, C, cubes)
        print(f"n={n}: A={A} B={B} C={C} post_holds={C == cubes}")
