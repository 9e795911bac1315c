/* expr:     sum(j, A(i,j) * B(j,k))
 * order:    i, j, k
 * formats:  A=dcsr, B=dcsr
 * semiring: arithmetic (+, *)
 * out:      dense row-major over i:16 x k:16, zero-filled by the caller */

void mmul1(const int* A_pos0, const int* A_crd0, const int* A_pos1, const int* A_crd1, const double* A_vals, const int* B_pos0, const int* B_crd0, const int* B_pos1, const int* B_crd1, const double* B_vals, double* out) {
    int A0_p0 = 0, A0_end0 = 0, A0_p1 = 0, A0_end1 = 0, B1_p0 = 0, B1_end0 = 0;
    int B1_p1 = 0, B1_end1 = 0;
    A0_p0 = A_pos0[0];
    A0_end0 = A_pos0[1];
    while (A0_p0 < A0_end0) {
        A0_p1 = A_pos1[A0_p0];
        A0_end1 = A_pos1[A0_p0 + 1];
        B1_p0 = B_pos0[0];
        B1_end0 = B_pos0[1];
        while (A0_p1 < A0_end1 && B1_p0 < B1_end0) {
            if (A_crd1[A0_p1] == B_crd0[B1_p0]) {
                B1_p1 = B_pos1[B1_p0];
                B1_end1 = B_pos1[B1_p0 + 1];
                while (B1_p1 < B1_end1) {
                    out[A_crd0[A0_p0] * 16 + B_crd1[B1_p1]] += A_vals[A0_p1] * B_vals[B1_p1];
                    B1_p1++;
                }
            }
            if (A_crd1[A0_p1] < B_crd0[B1_p0]) {
                A0_p1++;
            } else {
                B1_p0++;
            }
        }
        A0_p0++;
    }
}
