#pragma once

#include <array>
#include <cmath>

namespace shapeopt {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

/// 2x2 matrix, row-major.
struct Mat2 {
    double m[2][2] = {{0.0, 0.0}, {0.0, 0.0}};

    Mat2() = default;
    Mat2(double a, double b, double c, double d) : m{{a, b}, {c, d}} {}
    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 outer(const Vec2& u, const Vec2& v) {
        return {u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y};
    }

    double operator()(int i, int j) const { return m[i][j]; }
    double& operator()(int i, int j) { return m[i][j]; }

    Mat2 operator+(const Mat2& o) const {
        return {m[0][0] + o.m[0][0], m[0][1] + o.m[0][1],
                m[1][0] + o.m[1][0], m[1][1] + o.m[1][1]};
    }
    Mat2 operator-(const Mat2& o) const {
        return {m[0][0] - o.m[0][0], m[0][1] - o.m[0][1],
                m[1][0] - o.m[1][0], m[1][1] - o.m[1][1]};
    }
    Mat2 operator*(double s) const {
        return {m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s};
    }
    Mat2 operator*(const Mat2& o) const {
        return {m[0][0] * o.m[0][0] + m[0][1] * o.m[1][0],
                m[0][0] * o.m[0][1] + m[0][1] * o.m[1][1],
                m[1][0] * o.m[0][0] + m[1][1] * o.m[1][0],
                m[1][0] * o.m[0][1] + m[1][1] * o.m[1][1]};
    }
    Vec2 operator*(const Vec2& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y};
    }
    Mat2& operator+=(const Mat2& o) {
        m[0][0] += o.m[0][0]; m[0][1] += o.m[0][1];
        m[1][0] += o.m[1][0]; m[1][1] += o.m[1][1];
        return *this;
    }

    Mat2 transpose() const { return {m[0][0], m[1][0], m[0][1], m[1][1]}; }
    double trace() const { return m[0][0] + m[1][1]; }
    double det() const { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
    double frobenius2() const {
        return m[0][0] * m[0][0] + m[0][1] * m[0][1] +
               m[1][0] * m[1][0] + m[1][1] * m[1][1];
    }
    double frobenius() const { return std::sqrt(frobenius2()); }
    double ddot(const Mat2& o) const {
        return m[0][0] * o.m[0][0] + m[0][1] * o.m[0][1] +
               m[1][0] * o.m[1][0] + m[1][1] * o.m[1][1];
    }
};

inline Mat2 operator*(double s, const Mat2& a) { return a * s; }

/// Closed-form SVD of a 2x2 matrix: A = u * diag(s1, sign2 * s2) * v^T with
/// s1 >= s2 >= 0 and u, v rotations; a reflection is carried by sign2.
struct Svd2 {
    Mat2 u;
    double s1 = 0.0;
    double s2 = 0.0;
    double sign2 = 1.0;
    Mat2 v;
};

inline Svd2 svd2(const Mat2& a) {
    const double e = 0.5 * (a(0, 0) + a(1, 1));
    const double f = 0.5 * (a(0, 0) - a(1, 1));
    const double g = 0.5 * (a(1, 0) + a(0, 1));
    const double h = 0.5 * (a(1, 0) - a(0, 1));
    const double q = std::hypot(e, h);
    const double r = std::hypot(f, g);
    Svd2 out;
    out.s1 = q + r;
    out.s2 = std::abs(q - r);
    out.sign2 = (q >= r) ? 1.0 : -1.0;
    const double a1 = (r > 0.0) ? std::atan2(g, f) : 0.0;  // u + v
    const double a2 = (q > 0.0) ? std::atan2(h, e) : 0.0;  // u - v
    const double beta = 0.5 * (a1 - a2);
    const double gamma = 0.5 * (a1 + a2);
    out.u = {std::cos(gamma), -std::sin(gamma), std::sin(gamma), std::cos(gamma)};
    out.v = {std::cos(beta), -std::sin(beta), std::sin(beta), std::cos(beta)};
    return out;
}

/// Spectral (operator) norm of a 2x2 matrix from its singular values.
inline double spectral_norm(const Mat2& a) {
    const double q = std::hypot(0.5 * (a(0, 0) + a(1, 1)), 0.5 * (a(1, 0) - a(0, 1)));
    const double r = std::hypot(0.5 * (a(0, 0) - a(1, 1)), 0.5 * (a(1, 0) + a(0, 1)));
    return q + r;
}

struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
};

}  // namespace shapeopt
