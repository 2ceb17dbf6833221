"""Over F_q[[T]]: count nilpotent block matrices and match the Euler product.

The generating series built from block-lower-triangular nilpotent counts is
compared coefficient by coefficient with the truncated Euler product, and the
Z_p-side sum over flag classes is put next to it.
"""

from flagcl.fq import BlockShape, count_block_matrices, count_block_matrices_brute, euler_product_trunc, flag_cl_series, zp_flag_series

q = 2
print("Fine-Herstein: nilpotent n x n over F_2 number q^(n^2-n)")
for n in range(4):
    shape = BlockShape((n,))
    print(f"  n={n}: brute {count_block_matrices_brute(shape, q, 'nilpotent')}, "
          f"formula {count_block_matrices(shape, q, 'nilpotent')}")

k, D = 2, 4
series = flag_cl_series(q, k, D)
euler = euler_product_trunc(q, k, D)
print(f"\nk={k} series to total degree {D} equals Euler product: {series == euler}")
zp = zp_flag_series(q, k, 3)
print(f"Z_2 flag sum equals the F_2[[T]] series to degree 3: {zp == flag_cl_series(q, k, 3)}")
