"""Pure-Python substep kernel: the reference lane.

Scalar, allocation-free inner loop advancing the hand-cube system by 1 ms
substeps: fingertip forward kinematics, compliant point contacts with
anchored-spring Coulomb friction (static-capable, force capped at the
cone), impedance-controlled joints, semi-implicit Euler integration, and
an exact discrete work-energy ledger (per-channel work uses midpoint
velocities so kinetic-energy change equals the summed channel work
identically).

The compiled lane (_kernel_cy.pyx) mirrors this code operation for
operation; edits here must be replicated there to keep the lanes
bit-identical.
"""

from __future__ import annotations

import math

from .params import (
    A_PALM,
    A_SUPPORT,
    A_TIP,
    D_CONE_LAT,
    D_CONE_SPIN,
    D_MAX_TIP_NORMAL_Z,
    D_PALM_CONTACTS,
    D_SUPPORT_CONTACTS,
    D_TIP_CONTACT_0,
    D_TIP_FORCE_0,
    E_ACTUATOR,
    E_CONTACT_CUBE,
    E_CONTACT_JOINTS,
    E_GRAVITY,
    E_LIMIT,
    E_PERTURBATION,
    P_CLIM,
    P_CN,
    P_CPSI,
    P_CT,
    P_CUBE_HALF,
    P_CUBE_MASS,
    P_DT,
    P_ETA_LAT,
    P_ETA_SPIN_EFF,
    P_GRAVITY,
    P_JOINT_INERTIA,
    P_KD,
    P_KLIM,
    P_KN,
    P_KP,
    P_KPSI,
    P_KT,
    P_L1,
    P_L2,
    P_L3,
    P_PALM_ON,
    P_PALM_Z,
    P_SUPPORT_ON,
    P_SUPPORT_Z,
    P_TAU_MAX,
    P_TIP_RADIUS,
)

LANE = "python"


def run_substeps(
    q,
    qdot,
    qbar,
    cube_x,
    cube_q,
    cube_v,
    cube_w,
    params,
    mounts,
    inward,
    qmin,
    qmax,
    pert_force,
    pert_torque,
    anchors,
    spin_anchors,
    n_substeps,
    frame_every,
    frames_out,
    energy,
    diag,
):
    """Advance the system by n_substeps. Returns 0, or 1 on non-finite state.

    State arrays (including the friction anchors) are modified in place.
    frames_out (shape (n, 24)) receives [q, qdot] after every frame_every
    substeps when provided. energy accumulates the work-channel ledger;
    diag is zeroed and filled with per-call diagnostics.
    """
    kp = float(params[P_KP])
    kd = float(params[P_KD])
    tau_max = float(params[P_TAU_MAX])
    eta_lat = float(params[P_ETA_LAT])
    eta_spin = float(params[P_ETA_SPIN_EFF])
    mass = float(params[P_CUBE_MASS])
    half = float(params[P_CUBE_HALF])
    grav = float(params[P_GRAVITY])
    jin = float(params[P_JOINT_INERTIA])
    kn = float(params[P_KN])
    cn = float(params[P_CN])
    kt = float(params[P_KT])
    ct = float(params[P_CT])
    kpsi = float(params[P_KPSI])
    cpsi = float(params[P_CPSI])
    klim = float(params[P_KLIM])
    clim = float(params[P_CLIM])
    l1 = float(params[P_L1])
    l2 = float(params[P_L2])
    l3 = float(params[P_L3])
    tip_r = float(params[P_TIP_RADIUS])
    palm_z = float(params[P_PALM_Z])
    support_z = float(params[P_SUPPORT_Z])
    support_on = params[P_SUPPORT_ON] != 0.0
    palm_on = params[P_PALM_ON] != 0.0
    dt = float(params[P_DT])

    inv_m = 1.0 / mass
    side = 2.0 * half
    inertia = mass * side * side / 6.0
    inv_inertia = 1.0 / inertia

    pf0 = float(pert_force[0])
    pf1 = float(pert_force[1])
    pf2 = float(pert_force[2])
    pt0 = float(pert_torque[0])
    pt1 = float(pert_torque[1])
    pt2 = float(pert_torque[2])

    for i in range(13):
        diag[i] = 0.0

    x0 = float(cube_x[0])
    x1 = float(cube_x[1])
    x2 = float(cube_x[2])
    qw = float(cube_q[0])
    qx = float(cube_q[1])
    qy = float(cube_q[2])
    qz = float(cube_q[3])
    v0 = float(cube_v[0])
    v1 = float(cube_v[1])
    v2 = float(cube_v[2])
    w0 = float(cube_w[0])
    w1 = float(cube_w[1])
    w2 = float(cube_w[2])

    e_act = float(energy[E_ACTUATOR])
    e_lim = float(energy[E_LIMIT])
    e_cj = float(energy[E_CONTACT_JOINTS])
    e_gr = float(energy[E_GRAVITY])
    e_pe = float(energy[E_PERTURBATION])
    e_cc = float(energy[E_CONTACT_CUBE])

    tau_c = [0.0] * 12
    frame_idx = 0

    for step in range(n_substeps):
        # rotation matrix, cube body -> world
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

        # fingertip contacts
        for f in range(4):
            b = 3 * f
            a1 = float(q[b])
            a2 = float(q[b + 1])
            a3 = float(q[b + 2])
            jx0 = float(inward[f][0])
            jy0 = float(inward[f][1])
            c1 = math.cos(a1)
            s1 = math.sin(a1)
            jpx = c1 * jx0 - s1 * jy0
            jpy = s1 * jx0 + c1 * jy0
            t1 = a2
            t2 = a2 + a3
            t3 = a2 + 2.0 * a3
            st1 = math.sin(t1)
            ct1 = math.cos(t1)
            st2 = math.sin(t2)
            ct2 = math.cos(t2)
            st3 = math.sin(t3)
            ct3 = math.cos(t3)
            sext = l1 * st1 + l2 * st2 + l3 * st3
            cdrop = l1 * ct1 + l2 * ct2 + l3 * ct3
            tipx = float(mounts[f][0]) + sext * jpx
            tipy = float(mounts[f][1]) + sext * jpy
            tipz = float(mounts[f][2]) - cdrop
            # jacobian columns: col1 = sext*(-jpy, jpx, 0),
            # col2 = (cdrop*jpx, cdrop*jpy, sext), col3 = (c3*jpx, c3*jpy, s3)
            j1x = -sext * jpy
            j1y = sext * jpx
            c3 = l2 * ct2 + 2.0 * l3 * ct3
            s3 = l2 * st2 + 2.0 * l3 * st3
            qd1 = float(qdot[b])
            qd2 = float(qdot[b + 1])
            qd3 = float(qdot[b + 2])
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
                dist = math.sqrt(dist2)
                if dist >= tip_r:
                    ai = A_TIP + f
                    anchors[ai][0] = 0.0
                    anchors[ai][1] = 0.0
                    anchors[ai][2] = 0.0
                    spin_anchors[f] = 0.0
                    continue
                pen = tip_r - dist
                nbx = dxb / dist
                nby = dyb / dist
                nbz = dzb / dist
            else:
                # sphere center inside the box: push out of the nearest face
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

            # anchored-spring friction in the tangent plane, capped at the cone
            tx = relx - sep * nx
            ty = rely - sep * ny
            tz = relz - sep * nz
            ai = A_TIP + f
            d0 = float(anchors[ai][0]) + tx * dt
            d1 = float(anchors[ai][1]) + ty * dt
            d2 = float(anchors[ai][2]) + tz * dt
            dn = d0 * nx + d1 * ny + d2 * nz
            d0 -= dn * nx
            d1 -= dn * ny
            d2 -= dn * nz
            fw0 = kt * d0 + ct * tx
            fw1 = kt * d1 + ct * ty
            fw2 = kt * d2 + ct * tz
            fmag = math.sqrt(fw0 * fw0 + fw1 * fw1 + fw2 * fw2)
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
            anchors[ai][0] = d0
            anchors[ai][1] = d1
            anchors[ai][2] = d2
            # force on the tip opposes its slip relative to the cube
            ftx = -fw0
            fty = -fw1
            ftz = -fw2

            # torsional friction about the contact normal (cube side only)
            wn = w0 * nx + w1 * ny + w2 * nz
            psi = float(spin_anchors[f]) + wn * dt
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
            diag[D_TIP_FORCE_0 + f] += fn  # summed over substeps; mean = sum/n
            anz = nz if nz >= 0.0 else -nz
            if anz > diag[D_MAX_TIP_NORMAL_Z]:
                diag[D_MAX_TIP_NORMAL_Z] = anz

        # cube corners against the palm plane (above) and support plane (below)
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
                        d0 = float(anchors[ai][0]) + vpx * dt
                        d1 = float(anchors[ai][1]) + vpy * dt
                        fw0 = kt * d0 + ct * vpx
                        fw1 = kt * d1 + ct * vpy
                        fmag = math.sqrt(fw0 * fw0 + fw1 * fw1)
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
                        anchors[ai][0] = d0
                        anchors[ai][1] = d1
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
                        anchors[ai][0] = 0.0
                        anchors[ai][1] = 0.0
                if support_on:
                    ai = A_SUPPORT + ci
                    pen = support_z - cz
                    if pen > 0.0:
                        fn = kn * pen - cn * vpz
                        if fn < 0.0:
                            fn = 0.0
                        d0 = float(anchors[ai][0]) + vpx * dt
                        d1 = float(anchors[ai][1]) + vpy * dt
                        fw0 = kt * d0 + ct * vpx
                        fw1 = kt * d1 + ct * vpy
                        fmag = math.sqrt(fw0 * fw0 + fw1 * fw1)
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
                        anchors[ai][0] = d0
                        anchors[ai][1] = d1
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
                        anchors[ai][0] = 0.0
                        anchors[ai][1] = 0.0

        # joints: impedance control, limit penalty, contact reaction
        for i in range(12):
            qi = float(q[i])
            qdi = float(qdot[i])
            tpd = kp * (float(qbar[i]) - qi) - kd * qdi
            if tpd > tau_max:
                tpd = tau_max
            elif tpd < -tau_max:
                tpd = -tau_max
            tlim = 0.0
            if qi > float(qmax[i]):
                tlim = -klim * (qi - float(qmax[i])) - clim * qdi
            elif qi < float(qmin[i]):
                tlim = klim * (float(qmin[i]) - qi) - clim * qdi
            tci = tau_c[i]
            qd_new = qdi + dt * (tpd + tlim + tci) / jin
            mid = 0.5 * (qdi + qd_new)
            e_act += dt * tpd * mid
            e_lim += dt * tlim * mid
            e_cj += dt * tci * mid
            qdot[i] = qd_new
            q[i] = qi + dt * qd_new

        # cube linear
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

        # cube angular (isotropic inertia: no gyroscopic term)
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

        ang = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2) * dt
        if ang > 1e-12:
            ha = 0.5 * ang
            sa = math.sin(ha) / (ang / dt)
            dqw = math.cos(ha)
            dqx = w0 * sa
            dqy = w1 * sa
            dqz = w2 * sa
            nqw = dqw * qw - dqx * qx - dqy * qy - dqz * qz
            nqx = dqw * qx + dqx * qw + dqy * qz - dqz * qy
            nqy = dqw * qy - dqx * qz + dqy * qw + dqz * qx
            nqz = dqw * qz + dqx * qy - dqy * qx + dqz * qw
            nrm = math.sqrt(nqw * nqw + nqx * nqx + nqy * nqy + nqz * nqz)
            qw = nqw / nrm
            qx = nqx / nrm
            qy = nqy / nrm
            qz = nqz / nrm

        if frame_every > 0 and (step + 1) % frame_every == 0:
            for i in range(12):
                frames_out[frame_idx][i] = q[i]
                frames_out[frame_idx][12 + i] = qdot[i]
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
        total += float(q[i]) + float(qdot[i])
    if not math.isfinite(total):
        return 1
    return 0


def fingertip_positions(q, mounts, inward, l1, l2, l3, out):
    """Forward kinematics: fingertip world positions into out (4, 3)."""
    for f in range(4):
        b = 3 * f
        a1 = float(q[b])
        a2 = float(q[b + 1])
        a3 = float(q[b + 2])
        c1 = math.cos(a1)
        s1 = math.sin(a1)
        jpx = c1 * float(inward[f][0]) - s1 * float(inward[f][1])
        jpy = s1 * float(inward[f][0]) + c1 * float(inward[f][1])
        t1 = a2
        t2 = a2 + a3
        t3 = a2 + 2.0 * a3
        sext = l1 * math.sin(t1) + l2 * math.sin(t2) + l3 * math.sin(t3)
        cdrop = l1 * math.cos(t1) + l2 * math.cos(t2) + l3 * math.cos(t3)
        out[f][0] = float(mounts[f][0]) + sext * jpx
        out[f][1] = float(mounts[f][1]) + sext * jpy
        out[f][2] = float(mounts[f][2]) - cdrop
    return out
