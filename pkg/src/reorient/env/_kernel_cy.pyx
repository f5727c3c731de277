# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled substep kernel: mirrors _kernel_py.py operation for operation.

Both lanes must produce bit-identical trajectories; any change here must be
replicated in the pure-Python reference and vice versa.
"""

from libc.math cimport cos, sin, sqrt, isfinite

LANE = "compiled"

DEF P_KP = 0
DEF P_KD = 1
DEF P_TAU_MAX = 2
DEF P_ETA_LAT = 3
DEF P_ETA_SPIN_EFF = 4
DEF P_CUBE_MASS = 5
DEF P_CUBE_HALF = 6
DEF P_GRAVITY = 7
DEF P_JOINT_INERTIA = 8
DEF P_KN = 9
DEF P_CN = 10
DEF P_KT = 11
DEF P_CT = 12
DEF P_KLIM = 13
DEF P_CLIM = 14
DEF P_L1 = 15
DEF P_L2 = 16
DEF P_L3 = 17
DEF P_TIP_RADIUS = 18
DEF P_PALM_Z = 19
DEF P_SUPPORT_Z = 20
DEF P_SUPPORT_ON = 21
DEF P_PALM_ON = 22
DEF P_DT = 23
DEF P_KPSI = 24
DEF P_CPSI = 25

DEF E_ACTUATOR = 0
DEF E_LIMIT = 1
DEF E_CONTACT_JOINTS = 2
DEF E_GRAVITY = 3
DEF E_PERTURBATION = 4
DEF E_CONTACT_CUBE = 5

DEF D_CONE_LAT = 0
DEF D_CONE_SPIN = 1
DEF D_TIP_CONTACT_0 = 2
DEF D_PALM_CONTACTS = 6
DEF D_SUPPORT_CONTACTS = 7
DEF D_MAX_TIP_NORMAL_Z = 8
DEF D_TIP_FORCE_0 = 9

DEF A_TIP = 0
DEF A_PALM = 4
DEF A_SUPPORT = 12


def run_substeps(
    double[:] q,
    double[:] qdot,
    double[:] qbar,
    double[:] cube_x,
    double[:] cube_q,
    double[:] cube_v,
    double[:] cube_w,
    double[:] params,
    double[:, :] mounts,
    double[:, :] inward,
    double[:] qmin,
    double[:] qmax,
    double[:] pert_force,
    double[:] pert_torque,
    double[:, :] anchors,
    double[:] spin_anchors,
    int n_substeps,
    int frame_every,
    double[:, :] frames_out,
    double[:] energy,
    double[:] diag,
):
    cdef double kp = params[P_KP]
    cdef double kd = params[P_KD]
    cdef double tau_max = params[P_TAU_MAX]
    cdef double eta_lat = params[P_ETA_LAT]
    cdef double eta_spin = params[P_ETA_SPIN_EFF]
    cdef double mass = params[P_CUBE_MASS]
    cdef double half = params[P_CUBE_HALF]
    cdef double grav = params[P_GRAVITY]
    cdef double jin = params[P_JOINT_INERTIA]
    cdef double kn = params[P_KN]
    cdef double cn = params[P_CN]
    cdef double kt = params[P_KT]
    cdef double ct = params[P_CT]
    cdef double kpsi = params[P_KPSI]
    cdef double cpsi = params[P_CPSI]
    cdef double klim = params[P_KLIM]
    cdef double clim = params[P_CLIM]
    cdef double l1 = params[P_L1]
    cdef double l2 = params[P_L2]
    cdef double l3 = params[P_L3]
    cdef double tip_r = params[P_TIP_RADIUS]
    cdef double palm_z = params[P_PALM_Z]
    cdef double support_z = params[P_SUPPORT_Z]
    cdef bint support_on = params[P_SUPPORT_ON] != 0.0
    cdef bint palm_on = params[P_PALM_ON] != 0.0
    cdef double dt = params[P_DT]

    cdef double inv_m = 1.0 / mass
    cdef double side = 2.0 * half
    cdef double inertia = mass * side * side / 6.0
    cdef double inv_inertia = 1.0 / inertia

    cdef double pf0 = pert_force[0]
    cdef double pf1 = pert_force[1]
    cdef double pf2 = pert_force[2]
    cdef double pt0 = pert_torque[0]
    cdef double pt1 = pert_torque[1]
    cdef double pt2 = pert_torque[2]

    cdef int i, f, b, step, ci, ai, frame_idx
    for i in range(13):
        diag[i] = 0.0

    cdef double x0 = cube_x[0]
    cdef double x1 = cube_x[1]
    cdef double x2 = cube_x[2]
    cdef double qw = cube_q[0]
    cdef double qx = cube_q[1]
    cdef double qy = cube_q[2]
    cdef double qz = cube_q[3]
    cdef double v0 = cube_v[0]
    cdef double v1 = cube_v[1]
    cdef double v2 = cube_v[2]
    cdef double w0 = cube_w[0]
    cdef double w1 = cube_w[1]
    cdef double w2 = cube_w[2]

    cdef double e_act = energy[E_ACTUATOR]
    cdef double e_lim = energy[E_LIMIT]
    cdef double e_cj = energy[E_CONTACT_JOINTS]
    cdef double e_gr = energy[E_GRAVITY]
    cdef double e_pe = energy[E_PERTURBATION]
    cdef double e_cc = energy[E_CONTACT_CUBE]

    cdef double tau_c[12]
    cdef double r00, r01, r02, r10, r11, r12, r20, r21, r22
    cdef double fc0, fc1, fc2, tc0, tc1, tc2
    cdef double a1, a2, a3, jx0, jy0, c1, s1, jpx, jpy
    cdef double t1, t2, t3, st1, ct1, st2, ct2, st3, ct3
    cdef double sext, cdrop, tipx, tipy, tipz, j1x, j1y, c3, s3
    cdef double qd1, qd2, qd3, vtx, vty, vtz
    cdef double px, py, pz, bx, by, bz, cxb, cyb, czb
    cdef double dxb, dyb, dzb, dist2, dist, pen, nbx, nby, nbz
    cdef double dxf, dyf, dzf
    cdef double nx, ny, nz, rx, ry, rz, vcx, vcy, vcz
    cdef double relx, rely, relz, sep, fn, tx, ty, tz
    cdef double d0, d1, d2, dn, fw0, fw1, fw2, fmag, cap, s
    cdef double ftx, fty, ftz
    cdef double wn, psi, ts, caps, tsx, tsy, tsz, viol, sv, viols
    cdef double fx, fy, fz, anz
    cdef double sx, sy, sz, cz, vpx, vpy, vpz
    cdef double qi, qdi, tpd, tlim, tci, qd_new, mid
    cdef double fgz, ft0, ft1, ft2, vn0, vn1, vn2, m0, m1, m2
    cdef double tt0, tt1, tt2, wn0, wn1, wn2, mw0, mw1, mw2
    cdef double ang, ha, sa, dqw, dqx, dqy, dqz, nqw, nqx, nqy, nqz, nrm
    cdef double total

    frame_idx = 0

    for step in range(n_substeps):
        r00 = 1.0 - 2.0 * (qy * qy + qz * qz)
        r01 = 2.0 * (qx * qy - qw * qz)
        r02 = 2.0 * (qx * qz + qw * qy)
        r10 = 2.0 * (qx * qy + qw * qz)
        r11 = 1.0 - 2.0 * (qx * qx + qz * qz)
        r12 = 2.0 * (qy * qz - qw * qx)
        r20 = 2.0 * (qx * qz - qw * qy)
        r21 = 2.0 * (qy * qz + qw * qx)
        r22 = 1.0 - 2.0 * (qx * qx + qy * qy)

        fc0 = 0.0
        fc1 = 0.0
        fc2 = 0.0
        tc0 = 0.0
        tc1 = 0.0
        tc2 = 0.0
        for i in range(12):
            tau_c[i] = 0.0

        for f in range(4):
            b = 3 * f
            a1 = q[b]
            a2 = q[b + 1]
            a3 = q[b + 2]
            jx0 = inward[f, 0]
            jy0 = inward[f, 1]
            c1 = cos(a1)
            s1 = sin(a1)
            jpx = c1 * jx0 - s1 * jy0
            jpy = s1 * jx0 + c1 * jy0
            t1 = a2
            t2 = a2 + a3
            t3 = a2 + 2.0 * a3
            st1 = sin(t1)
            ct1 = cos(t1)
            st2 = sin(t2)
            ct2 = cos(t2)
            st3 = sin(t3)
            ct3 = cos(t3)
            sext = l1 * st1 + l2 * st2 + l3 * st3
            cdrop = l1 * ct1 + l2 * ct2 + l3 * ct3
            tipx = mounts[f, 0] + sext * jpx
            tipy = mounts[f, 1] + sext * jpy
            tipz = mounts[f, 2] - cdrop
            j1x = -sext * jpy
            j1y = sext * jpx
            c3 = l2 * ct2 + 2.0 * l3 * ct3
            s3 = l2 * st2 + 2.0 * l3 * st3
            qd1 = qdot[b]
            qd2 = qdot[b + 1]
            qd3 = qdot[b + 2]
            vtx = j1x * qd1 + cdrop * jpx * qd2 + c3 * jpx * qd3
            vty = j1y * qd1 + cdrop * jpy * qd2 + c3 * jpy * qd3
            vtz = sext * qd2 + s3 * qd3

            px = tipx - x0
            py = tipy - x1
            pz = tipz - x2
            bx = r00 * px + r10 * py + r20 * pz
            by = r01 * px + r11 * py + r21 * pz
            bz = r02 * px + r12 * py + r22 * pz

            cxb = -half if bx < -half else (half if bx > half else bx)
            cyb = -half if by < -half else (half if by > half else by)
            czb = -half if bz < -half else (half if bz > half else bz)
            dxb = bx - cxb
            dyb = by - cyb
            dzb = bz - czb
            dist2 = dxb * dxb + dyb * dyb + dzb * dzb

            if dist2 > 1e-24:
                dist = sqrt(dist2)
                if dist >= tip_r:
                    ai = A_TIP + f
                    anchors[ai, 0] = 0.0
                    anchors[ai, 1] = 0.0
                    anchors[ai, 2] = 0.0
                    spin_anchors[f] = 0.0
                    continue
                pen = tip_r - dist
                nbx = dxb / dist
                nby = dyb / dist
                nbz = dzb / dist
            else:
                dxf = half - (bx if bx >= 0.0 else -bx)
                dyf = half - (by if by >= 0.0 else -by)
                dzf = half - (bz if bz >= 0.0 else -bz)
                if dxf <= dyf and dxf <= dzf:
                    nbx = 1.0 if bx >= 0.0 else -1.0
                    nby = 0.0
                    nbz = 0.0
                    pen = tip_r + dxf
                    cxb = nbx * half
                elif dyf <= dzf:
                    nbx = 0.0
                    nby = 1.0 if by >= 0.0 else -1.0
                    nbz = 0.0
                    pen = tip_r + dyf
                    cyb = nby * half
                else:
                    nbx = 0.0
                    nby = 0.0
                    nbz = 1.0 if bz >= 0.0 else -1.0
                    pen = tip_r + dzf
                    czb = nbz * half

            nx = r00 * nbx + r01 * nby + r02 * nbz
            ny = r10 * nbx + r11 * nby + r12 * nbz
            nz = r20 * nbx + r21 * nby + r22 * nbz
            rx = r00 * cxb + r01 * cyb + r02 * czb
            ry = r10 * cxb + r11 * cyb + r12 * czb
            rz = r20 * cxb + r21 * cyb + r22 * czb
            vcx = v0 + w1 * rz - w2 * ry
            vcy = v1 + w2 * rx - w0 * rz
            vcz = v2 + w0 * ry - w1 * rx
            relx = vtx - vcx
            rely = vty - vcy
            relz = vtz - vcz
            sep = relx * nx + rely * ny + relz * nz
            fn = kn * pen - cn * sep
            if fn < 0.0:
                fn = 0.0

            tx = relx - sep * nx
            ty = rely - sep * ny
            tz = relz - sep * nz
            ai = A_TIP + f
            d0 = anchors[ai, 0] + tx * dt
            d1 = anchors[ai, 1] + ty * dt
            d2 = anchors[ai, 2] + tz * dt
            dn = d0 * nx + d1 * ny + d2 * nz
            d0 -= dn * nx
            d1 -= dn * ny
            d2 -= dn * nz
            fw0 = kt * d0 + ct * tx
            fw1 = kt * d1 + ct * ty
            fw2 = kt * d2 + ct * tz
            fmag = sqrt(fw0 * fw0 + fw1 * fw1 + fw2 * fw2)
            cap = eta_lat * fn
            if fmag > cap:
                if fmag > 1e-12:
                    s = cap / fmag
                    fw0 *= s
                    fw1 *= s
                    fw2 *= s
                else:
                    fw0 = 0.0
                    fw1 = 0.0
                    fw2 = 0.0
                d0 = fw0 / kt
                d1 = fw1 / kt
                d2 = fw2 / kt
                fmag = cap
            anchors[ai, 0] = d0
            anchors[ai, 1] = d1
            anchors[ai, 2] = d2
            ftx = -fw0
            fty = -fw1
            ftz = -fw2

            wn = w0 * nx + w1 * ny + w2 * nz
            psi = spin_anchors[f] + wn * dt
            ts = kpsi * psi + cpsi * wn
            caps = eta_spin * fn
            if ts > caps:
                ts = caps
                psi = ts / kpsi
            elif ts < -caps:
                ts = -caps
                psi = ts / kpsi
            spin_anchors[f] = psi
            tsx = -ts * nx
            tsy = -ts * ny
            tsz = -ts * nz

            viol = fmag - cap
            if viol > diag[D_CONE_LAT]:
                diag[D_CONE_LAT] = viol
            sv = ts if ts >= 0.0 else -ts
            viols = sv - caps
            if viols > diag[D_CONE_SPIN]:
                diag[D_CONE_SPIN] = viols

            fx = fn * nx + ftx
            fy = fn * ny + fty
            fz = fn * nz + ftz
            fc0 -= fx
            fc1 -= fy
            fc2 -= fz
            tc0 += rz * fy - ry * fz + tsx
            tc1 += rx * fz - rz * fx + tsy
            tc2 += ry * fx - rx * fy + tsz
            tau_c[b] += j1x * fx + j1y * fy
            tau_c[b + 1] += cdrop * jpx * fx + cdrop * jpy * fy + sext * fz
            tau_c[b + 2] += c3 * jpx * fx + c3 * jpy * fy + s3 * fz

            diag[D_TIP_CONTACT_0 + f] += 1.0
            diag[D_TIP_FORCE_0 + f] += fn
            anz = nz if nz >= 0.0 else -nz
            if anz > diag[D_MAX_TIP_NORMAL_Z]:
                diag[D_MAX_TIP_NORMAL_Z] = anz

        if palm_on or support_on:
            for ci in range(8):
                sx = half if (ci & 1) != 0 else -half
                sy = half if (ci & 2) != 0 else -half
                sz = half if (ci & 4) != 0 else -half
                rx = r00 * sx + r01 * sy + r02 * sz
                ry = r10 * sx + r11 * sy + r12 * sz
                rz = r20 * sx + r21 * sy + r22 * sz
                cz = x2 + rz
                vpx = v0 + w1 * rz - w2 * ry
                vpy = v1 + w2 * rx - w0 * rz
                vpz = v2 + w0 * ry - w1 * rx
                if palm_on:
                    ai = A_PALM + ci
                    pen = cz - palm_z
                    if pen > 0.0:
                        fn = kn * pen + cn * vpz
                        if fn < 0.0:
                            fn = 0.0
                        d0 = anchors[ai, 0] + vpx * dt
                        d1 = anchors[ai, 1] + vpy * dt
                        fw0 = kt * d0 + ct * vpx
                        fw1 = kt * d1 + ct * vpy
                        fmag = sqrt(fw0 * fw0 + fw1 * fw1)
                        cap = eta_lat * fn
                        if fmag > cap:
                            if fmag > 1e-12:
                                s = cap / fmag
                                fw0 *= s
                                fw1 *= s
                            else:
                                fw0 = 0.0
                                fw1 = 0.0
                            d0 = fw0 / kt
                            d1 = fw1 / kt
                            fmag = cap
                        anchors[ai, 0] = d0
                        anchors[ai, 1] = d1
                        viol = fmag - cap
                        if viol > diag[D_CONE_LAT]:
                            diag[D_CONE_LAT] = viol
                        fx = -fw0
                        fy = -fw1
                        fz = -fn
                        fc0 += fx
                        fc1 += fy
                        fc2 += fz
                        tc0 += ry * fz - rz * fy
                        tc1 += rz * fx - rx * fz
                        tc2 += rx * fy - ry * fx
                        diag[D_PALM_CONTACTS] += 1.0
                    else:
                        anchors[ai, 0] = 0.0
                        anchors[ai, 1] = 0.0
                if support_on:
                    ai = A_SUPPORT + ci
                    pen = support_z - cz
                    if pen > 0.0:
                        fn = kn * pen - cn * vpz
                        if fn < 0.0:
                            fn = 0.0
                        d0 = anchors[ai, 0] + vpx * dt
                        d1 = anchors[ai, 1] + vpy * dt
                        fw0 = kt * d0 + ct * vpx
                        fw1 = kt * d1 + ct * vpy
                        fmag = sqrt(fw0 * fw0 + fw1 * fw1)
                        cap = eta_lat * fn
                        if fmag > cap:
                            if fmag > 1e-12:
                                s = cap / fmag
                                fw0 *= s
                                fw1 *= s
                            else:
                                fw0 = 0.0
                                fw1 = 0.0
                            d0 = fw0 / kt
                            d1 = fw1 / kt
                            fmag = cap
                        anchors[ai, 0] = d0
                        anchors[ai, 1] = d1
                        viol = fmag - cap
                        if viol > diag[D_CONE_LAT]:
                            diag[D_CONE_LAT] = viol
                        fx = -fw0
                        fy = -fw1
                        fz = fn
                        fc0 += fx
                        fc1 += fy
                        fc2 += fz
                        tc0 += ry * fz - rz * fy
                        tc1 += rz * fx - rx * fz
                        tc2 += rx * fy - ry * fx
                        diag[D_SUPPORT_CONTACTS] += 1.0
                    else:
                        anchors[ai, 0] = 0.0
                        anchors[ai, 1] = 0.0

        for i in range(12):
            qi = q[i]
            qdi = qdot[i]
            tpd = kp * (qbar[i] - qi) - kd * qdi
            if tpd > tau_max:
                tpd = tau_max
            elif tpd < -tau_max:
                tpd = -tau_max
            tlim = 0.0
            if qi > qmax[i]:
                tlim = -klim * (qi - qmax[i]) - clim * qdi
            elif qi < qmin[i]:
                tlim = klim * (qmin[i] - qi) - clim * qdi
            tci = tau_c[i]
            qd_new = qdi + dt * (tpd + tlim + tci) / jin
            mid = 0.5 * (qdi + qd_new)
            e_act += dt * tpd * mid
            e_lim += dt * tlim * mid
            e_cj += dt * tci * mid
            qdot[i] = qd_new
            q[i] = qi + dt * qd_new

        fgz = mass * grav
        ft0 = fc0 + pf0
        ft1 = fc1 + pf1
        ft2 = fc2 + pf2 + fgz
        vn0 = v0 + dt * ft0 * inv_m
        vn1 = v1 + dt * ft1 * inv_m
        vn2 = v2 + dt * ft2 * inv_m
        m0 = 0.5 * (v0 + vn0)
        m1 = 0.5 * (v1 + vn1)
        m2 = 0.5 * (v2 + vn2)
        e_gr += dt * fgz * m2
        e_pe += dt * (pf0 * m0 + pf1 * m1 + pf2 * m2)
        e_cc += dt * (fc0 * m0 + fc1 * m1 + fc2 * m2)
        v0 = vn0
        v1 = vn1
        v2 = vn2
        x0 += dt * v0
        x1 += dt * v1
        x2 += dt * v2

        tt0 = tc0 + pt0
        tt1 = tc1 + pt1
        tt2 = tc2 + pt2
        wn0 = w0 + dt * tt0 * inv_inertia
        wn1 = w1 + dt * tt1 * inv_inertia
        wn2 = w2 + dt * tt2 * inv_inertia
        mw0 = 0.5 * (w0 + wn0)
        mw1 = 0.5 * (w1 + wn1)
        mw2 = 0.5 * (w2 + wn2)
        e_pe += dt * (pt0 * mw0 + pt1 * mw1 + pt2 * mw2)
        e_cc += dt * (tc0 * mw0 + tc1 * mw1 + tc2 * mw2)
        w0 = wn0
        w1 = wn1
        w2 = wn2

        ang = sqrt(w0 * w0 + w1 * w1 + w2 * w2) * dt
        if ang > 1e-12:
            ha = 0.5 * ang
            sa = sin(ha) / (ang / dt)
            dqw = cos(ha)
            dqx = w0 * sa
            dqy = w1 * sa
            dqz = w2 * sa
            nqw = dqw * qw - dqx * qx - dqy * qy - dqz * qz
            nqx = dqw * qx + dqx * qw + dqy * qz - dqz * qy
            nqy = dqw * qy - dqx * qz + dqy * qw + dqz * qx
            nqz = dqw * qz + dqx * qy - dqy * qx + dqz * qw
            nrm = sqrt(nqw * nqw + nqx * nqx + nqy * nqy + nqz * nqz)
            qw = nqw / nrm
            qx = nqx / nrm
            qy = nqy / nrm
            qz = nqz / nrm

        if frame_every > 0 and (step + 1) % frame_every == 0:
            for i in range(12):
                frames_out[frame_idx, i] = q[i]
                frames_out[frame_idx, 12 + i] = qdot[i]
            frame_idx += 1

    cube_x[0] = x0
    cube_x[1] = x1
    cube_x[2] = x2
    cube_q[0] = qw
    cube_q[1] = qx
    cube_q[2] = qy
    cube_q[3] = qz
    cube_v[0] = v0
    cube_v[1] = v1
    cube_v[2] = v2
    cube_w[0] = w0
    cube_w[1] = w1
    cube_w[2] = w2
    energy[E_ACTUATOR] = e_act
    energy[E_LIMIT] = e_lim
    energy[E_CONTACT_JOINTS] = e_cj
    energy[E_GRAVITY] = e_gr
    energy[E_PERTURBATION] = e_pe
    energy[E_CONTACT_CUBE] = e_cc

    total = x0 + x1 + x2 + qw + qx + qy + qz + v0 + v1 + v2 + w0 + w1 + w2
    for i in range(12):
        total += q[i] + qdot[i]
    if not isfinite(total):
        return 1
    return 0


def fingertip_positions(
    double[:] q,
    double[:, :] mounts,
    double[:, :] inward,
    double l1,
    double l2,
    double l3,
    double[:, :] out,
):
    cdef int f, b
    cdef double a1, a2, a3, c1, s1, jpx, jpy, t1, t2, t3, sext, cdrop
    for f in range(4):
        b = 3 * f
        a1 = q[b]
        a2 = q[b + 1]
        a3 = q[b + 2]
        c1 = cos(a1)
        s1 = sin(a1)
        jpx = c1 * inward[f, 0] - s1 * inward[f, 1]
        jpy = s1 * inward[f, 0] + c1 * inward[f, 1]
        t1 = a2
        t2 = a2 + a3
        t3 = a2 + 2.0 * a3
        sext = l1 * sin(t1) + l2 * sin(t2) + l3 * sin(t3)
        cdrop = l1 * cos(t1) + l2 * cos(t2) + l3 * cos(t3)
        out[f, 0] = mounts[f, 0] + sext * jpx
        out[f, 1] = mounts[f, 1] + sext * jpy
        out[f, 2] = mounts[f, 2] - cdrop
    return out
